"""Categorical condition handling: one-hot encodings, embeddings and FiLM
generators emitting per-layer (scale, bias) modulation pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

NUM_PITCH_CLASSES = 12
NUM_OCTAVES = 9
PO_ONEHOT_LEN = NUM_PITCH_CLASSES + NUM_OCTAVES  # 21


class ConditionError(Exception):
    pass


@dataclass(frozen=True)
class ConditionLabel:
    """Pitch class, octave and (for domain-conditioned models) instrument."""

    pitch_class: int
    octave: int
    instrument: int | None = None

    def __post_init__(self):
        if not 0 <= self.pitch_class < NUM_PITCH_CLASSES:
            raise ConditionError(f"pitch_class {self.pitch_class} out of range 0..11")
        if not 0 <= self.octave < NUM_OCTAVES:
            raise ConditionError(f"octave {self.octave} out of range 0..8")
        if self.instrument is not None and self.instrument < 0:
            raise ConditionError(f"instrument {self.instrument} must be >= 0")


def encode_onehot(label: ConditionLabel, num_instruments: int | None = None) -> np.ndarray:
    """Group-wise one-hot vector: 12 pitch + 9 octave (+ K instrument) slots."""
    length = PO_ONEHOT_LEN + (num_instruments or 0)
    vec = np.zeros(length)
    vec[label.pitch_class] = 1.0
    vec[NUM_PITCH_CLASSES + label.octave] = 1.0
    if num_instruments is not None:
        if label.instrument is None:
            raise ConditionError("label has no instrument but an instrument slot was requested")
        if label.instrument >= num_instruments:
            raise ConditionError(
                f"instrument {label.instrument} out of range for K={num_instruments}"
            )
        vec[PO_ONEHOT_LEN + label.instrument] = 1.0
    return vec


def decode_onehot(vec: np.ndarray, num_instruments: int | None = None) -> ConditionLabel:
    """Inverse of encode_onehot."""
    expected = PO_ONEHOT_LEN + (num_instruments or 0)
    if len(vec) != expected:
        raise ConditionError(f"expected vector of length {expected}, got {len(vec)}")
    pc = int(np.argmax(vec[:NUM_PITCH_CLASSES]))
    octave = int(np.argmax(vec[NUM_PITCH_CLASSES:PO_ONEHOT_LEN]))
    instrument = None
    if num_instruments is not None:
        instrument = int(np.argmax(vec[PO_ONEHOT_LEN:]))
    return ConditionLabel(pc, octave, instrument)


def onehot_batch(pitch: torch.Tensor, octave: torch.Tensor, dtype=torch.float32) -> torch.Tensor:
    """[N, 21] pitch/octave one-hots for concatenative conditioning."""
    n = pitch.shape[0]
    vec = torch.zeros(n, PO_ONEHOT_LEN, dtype=dtype)
    vec[torch.arange(n), pitch] = 1.0
    vec[torch.arange(n), NUM_PITCH_CLASSES + octave] = 1.0
    return vec


def film_modulate(
    h: torch.Tensor, scale: torch.Tensor, bias: torch.Tensor, axis: str = "feature"
) -> torch.Tensor:
    """Affine modulation h' = scale * h + bias along features or channels.

    feature: h [N, F], scale/bias [N, F] (or [F]).
    channel: h [N, C, ...], scale/bias [N, C] (or [C]), broadcast over the map.
    """
    if axis == "feature":
        if scale.shape[-1] != h.shape[-1]:
            raise ConditionError(
                f"feature-wise scale of size {scale.shape[-1]} does not match {h.shape[-1]} features"
            )
        return scale * h + bias
    if axis == "channel":
        if scale.shape[-1] != h.shape[1]:
            raise ConditionError(
                f"channel-wise scale of size {scale.shape[-1]} does not match {h.shape[1]} channels"
            )
        extra = h.dim() - scale.dim()
        shape = scale.shape + (1,) * extra
        return scale.reshape(shape) * h + bias.reshape(shape)
    raise ConditionError(f"unknown modulation axis {axis!r}")


class FiLMGenerator(nn.Module):
    """Maps categorical conditions to one (scale, bias) pair per modulated layer.

    The three categorical fields are embedded separately and concatenated,
    then pushed through a small FC trunk (instance-normalized, leaky-ReLU).
    Each modulated layer has its own output head; heads are zero-initialized
    and the applied scale is 1 + delta, so a fresh generator modulates with
    exact identity.
    """

    def __init__(
        self,
        layer_sizes: dict[str, int],
        num_instruments: int | None = None,
        embed_dim: int = 8,
        trunk_widths: tuple[int, ...] = (32, 64, 128),
        negative_slope: float = 0.2,
    ):
        super().__init__()
        self.layer_sizes = dict(layer_sizes)
        self.num_instruments = num_instruments
        self.embed_pitch = nn.Embedding(NUM_PITCH_CLASSES, embed_dim)
        self.embed_octave = nn.Embedding(NUM_OCTAVES, embed_dim)
        self.embed_instrument = (
            nn.Embedding(num_instruments, embed_dim) if num_instruments else None
        )
        in_dim = embed_dim * (3 if num_instruments else 2)
        trunk = []
        for width in trunk_widths:
            trunk.append(nn.Linear(in_dim, width))
            in_dim = width
        self.trunk = nn.ModuleList(trunk)
        self.act = nn.LeakyReLU(negative_slope)
        self.heads = nn.ModuleDict(
            {name: nn.Linear(in_dim, 2 * size) for name, size in layer_sizes.items()}
        )
        for head in self.heads.values():
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

    def forward(
        self,
        pitch: torch.Tensor,
        octave: torch.Tensor,
        instrument: torch.Tensor | None = None,
    ) -> dict[str, tuple[torch.Tensor, torch.Tensor]]:
        from .model import instance_norm  # local import to avoid a cycle

        parts = [self.embed_pitch(pitch), self.embed_octave(octave)]
        if self.embed_instrument is not None:
            if instrument is None:
                raise ConditionError("generator is domain-conditioned but no instrument given")
            parts.append(self.embed_instrument(instrument))
        elif instrument is not None:
            raise ConditionError("instrument given to a pitch/octave-only generator")
        h = torch.cat(parts, dim=-1)
        for fc in self.trunk:
            h = self.act(instance_norm(fc(h), axis="feature"))
        params = {}
        for name, head in self.heads.items():
            out = head(h)
            delta, bias = out.chunk(2, dim=-1)
            params[name] = (1.0 + delta, bias)
        return params


def film_generate(
    gen: FiLMGenerator, label: ConditionLabel
) -> dict[str, tuple[torch.Tensor, torch.Tensor]]:
    """Single-label convenience wrapper around the generator forward."""
    pitch = torch.tensor([label.pitch_class])
    octave = torch.tensor([label.octave])
    instrument = None
    if gen.num_instruments:
        if label.instrument is None:
            raise ConditionError("label has no instrument for a domain-conditioned generator")
        instrument = torch.tensor([label.instrument])
    return gen(pitch, octave, instrument)
