"""Timbre transfer execution: chunk-level domain switching and windowed
melody transfer with overlap-add stitching back to audio."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .audio import AudioBuffer
from .conditioning import ConditionLabel
from .model import MoveModel, batch_labels
from .spectral import (
    LogMagSpectrogram,
    NormStats,
    SpectralConfig,
    SpectroChunk,
    analyze,
    denormalize_array,
    invert,
    normalize_array,
)


class TransferError(Exception):
    pass


@dataclass(frozen=True)
class TransferRequest:
    source_instrument: int
    target_instrument: int
    pitch_class: int | None = None  # optional overrides for the decode side
    octave: int | None = None


def map_chunks(
    model: MoveModel,
    x: np.ndarray,
    enc_labels: list[ConditionLabel],
    dec_labels: list[ConditionLabel],
) -> np.ndarray:
    """Posterior-mean encode under enc_labels, decode under dec_labels,
    tanh generation. Reconstruction and transfer share this single path."""
    if len(enc_labels) != len(x) or len(dec_labels) != len(x):
        raise TransferError("label count does not match chunk count")
    dtype = next(model.parameters()).dtype
    xt = torch.as_tensor(np.asarray(x), dtype=dtype)
    with torch.no_grad():
        mu_z, _ = model.encode(xt, batch_labels(enc_labels, model.cfg))
        mu_x, _ = model.decode(mu_z, batch_labels(dec_labels, model.cfg))
        out = torch.tanh(mu_x)
    return out.numpy().astype(np.float64)


def reconstruct_chunks(
    model: MoveModel, x: np.ndarray, labels: list[ConditionLabel]
) -> np.ndarray:
    """Encode and decode with the chunk's own condition."""
    return map_chunks(model, x, labels, labels)


def transfer_labels(
    labels: list[ConditionLabel], req: TransferRequest
) -> list[ConditionLabel]:
    out = []
    for lb in labels:
        out.append(
            ConditionLabel(
                req.pitch_class if req.pitch_class is not None else lb.pitch_class,
                req.octave if req.octave is not None else lb.octave,
                req.target_instrument,
            )
        )
    return out


def transfer_chunk(
    model: MoveModel, chunk: SpectroChunk | np.ndarray, label: ConditionLabel,
    req: TransferRequest,
) -> np.ndarray:
    """Single-chunk domain switch; label is the source-side condition."""
    if label.instrument != req.source_instrument:
        raise TransferError("label instrument does not match request source")
    data = chunk.data if isinstance(chunk, SpectroChunk) else np.asarray(chunk)
    return map_chunks(model, data[None], [label], transfer_labels([label], req))[0]


def estimate_pitch(linear_frames: np.ndarray, bin_centers: np.ndarray) -> tuple[int, int]:
    """Nearest equal-tempered note of the max-energy band, refined by an
    energy-weighted average over the peak band's immediate neighbours (band
    spacing can exceed a semitone at moderate resolutions)."""
    energy = (linear_frames ** 2).sum(axis=0)
    b = int(np.argmax(energy))
    lo, hi = max(b - 1, 0), min(b + 2, len(bin_centers))
    w = energy[lo:hi]
    f = float((bin_centers[lo:hi] * w).sum() / w.sum()) if w.sum() > 0 else 0.0
    if f <= 0:
        return 9, 4
    midi = int(round(69 + 12 * math.log2(f / 440.0)))
    midi = min(max(midi, 12), 119)  # octave range 0..8
    return midi % 12, midi // 12 - 1


def _overlap_add(starts, chunks, t_chunk: int, n_bins: int) -> np.ndarray:
    """Stitch chunks at the given frame offsets; overlapping frames are
    linear-crossfaded (convex combinations of the two chunks' values)."""
    out = np.zeros((starts[-1] + t_chunk, n_bins))
    filled = 0
    for s, data in zip(starts, chunks):
        lo = max(filled - s, 0)
        if lo > 0:
            w = (np.arange(1, lo + 1) / (lo + 1))[:, None]
            out[s : s + lo] = (1.0 - w) * out[s : s + lo] + w * data[:lo]
        out[s + lo : s + t_chunk] = data[lo:]
        filled = s + t_chunk
    return out


def transfer_melody(
    model: MoveModel,
    stats: NormStats,
    scfg: SpectralConfig,
    audio: AudioBuffer,
    req: TransferRequest,
    t_chunk: int = 16,
    overlap: int = 4,
    gl_iterations: int = 60,
) -> AudioBuffer:
    """Windowed melody transfer.

    Analysis -> overlapping chunks -> per-chunk pitch estimate -> transfer
    each chunk -> linear-crossfade overlap-add in log-magnitude space ->
    denormalize -> iterative inversion. Output length stays within one
    analysis hop of the input length.
    """
    if not 0 <= overlap < t_chunk:
        raise TransferError("need 0 <= overlap < chunk length")
    spec = analyze(audio, scfg)
    n_frames = spec.n_frames
    if n_frames < t_chunk:
        raise TransferError(
            f"audio too short: {n_frames} frames < one chunk of {t_chunk}"
        )
    frames_norm = normalize_array(spec.frames, stats)
    hop_c = t_chunk - overlap
    starts = list(range(0, n_frames - t_chunk + 1, hop_c))
    if starts[-1] != n_frames - t_chunk:
        starts.append(n_frames - t_chunk)  # cover the tail exactly

    chunks = np.stack([frames_norm[s : s + t_chunk] for s in starts])
    enc_labels = []
    for s in starts:
        pc, octave = estimate_pitch(np.exp(spec.frames[s : s + t_chunk]), spec.bin_centers)
        enc_labels.append(ConditionLabel(pc, octave, req.source_instrument))
    dec_labels = transfer_labels(enc_labels, req)
    out_chunks = map_chunks(model, chunks, enc_labels, dec_labels)

    out = _overlap_add(starts, out_chunks, t_chunk, spec.n_bins)
    log_frames = denormalize_array(out, stats)
    result = LogMagSpectrogram(log_frames, spec.bin_centers, spec.hop, spec.floor_value, scfg)
    return invert(result, gl_iterations)
