"""Gaussian encoder/decoder networks in three variants.

Variants:
    unit_mmd_cpo  -- paired VAE: domain-specific conv/FC fronts and backs,
                     weight-shared middle, concatenative pitch/octave one-hots.
    move_star_fpo -- paired VAE with FiLM modulation of the shared FC layers
                     on pitch and octave.
    move_fpod     -- one shared network for all domains; FiLM modulation of
                     conv and FC layers conditioned on pitch, octave and
                     instrument. Transfer = switching the instrument condition.

All intermediate normalization is affine-free instance normalization; FiLM
supplies the conditional affine part where configured. Decoded means pass
through tanh only on the generation path; training losses see the raw means.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .conditioning import ConditionLabel, FiLMGenerator, film_modulate, onehot_batch, PO_ONEHOT_LEN

VARIANTS = ("unit_mmd_cpo", "move_star_fpo", "move_fpod")

SIGMA_Z_MIN, SIGMA_Z_MAX = 1e-4, 1e2
SIGMA_X_MIN, SIGMA_X_MAX = 1e-3, 1e1


class ModelError(Exception):
    pass


def instance_norm(h: torch.Tensor, axis: str = "feature", eps: float = 1e-5) -> torch.Tensor:
    """Per-sample zero-mean unit-variance normalization.

    feature: normalize each sample's feature vector (last dim).
    channel: normalize each sample's per-channel spatial map, h [N, C, ...].
    """
    if axis == "feature":
        dims = (-1,)
        count = h.shape[-1]
    elif axis == "channel":
        if h.dim() < 3:
            raise ModelError("channel-wise instance norm needs [N, C, ...] input")
        dims = tuple(range(2, h.dim()))
        count = 1
        for d in dims:
            count *= h.shape[d]
    else:
        raise ModelError(f"unknown instance norm axis {axis!r}")
    if count < 2:
        raise ModelError(f"instance norm axis has {count} element(s); need >= 2")
    mean = h.mean(dim=dims, keepdim=True)
    var = h.var(dim=dims, unbiased=False, keepdim=True)
    return (h - mean) / torch.sqrt(var + eps)


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: tuple[int, int]
    stride: tuple[int, int]
    padding: tuple[int, int]


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    n_bins: int = 128
    t_chunk: int = 16
    latent_dim: int = 3
    num_instruments: int = 2
    conv_layers: tuple[ConvSpec, ...] = (
        ConvSpec(8, (4, 9), (3, 3), (2, 4)),
        ConvSpec(16, (4, 7), (1, 3), (0, 3)),
    )
    fc_widths: tuple[int, ...] = (512, 256, 128)
    head_kernel: tuple[int, int] = (3, 7)
    embed_dim: int = 8
    film_trunk: tuple[int, ...] = (32, 64, 128)
    negative_slope: float = 0.2
    scale_factor: float = 0.25  # width relative to the full-resolution preset

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.variant == "move_fpod" and self.num_instruments < 2:
            raise ValueError("move_fpod requires at least 2 instruments")
        if self.variant != "move_fpod" and self.num_instruments != 2:
            raise ValueError("paired variants model exactly 2 domains")
        if len(self.conv_layers) != 2 or len(self.fc_widths) != 3:
            raise ValueError("expected 2 conv layers and 3 FC widths")
        if self.head_kernel[0] % 2 != 1 or self.head_kernel[1] % 2 != 1:
            raise ValueError("head kernel sides must be odd")

    @property
    def is_paired(self) -> bool:
        return self.variant in ("unit_mmd_cpo", "move_star_fpo")

    @property
    def uses_film(self) -> bool:
        return self.variant in ("move_star_fpo", "move_fpod")

    @property
    def chunk_elements(self) -> int:
        return self.t_chunk * self.n_bins


def desk_config(variant: str = "move_fpod", num_instruments: int = 2, **kw) -> ModelConfig:
    return ModelConfig(variant=variant, num_instruments=num_instruments, **kw)


def full_scale_model_config(variant: str = "move_fpod", num_instruments: int = 2) -> ModelConfig:
    """The full-resolution layer table (500-bin inputs)."""
    return ModelConfig(
        variant=variant,
        n_bins=500,
        t_chunk=16,
        num_instruments=num_instruments,
        conv_layers=(
            ConvSpec(32, (9, 21), (3, 3), (4, 10)),
            ConvSpec(64, (6, 15), (1, 3), (0, 7)),
        ),
        fc_widths=(4096, 2048, 1024),
        head_kernel=(5, 15),
        film_trunk=(128, 512, 2048),
        scale_factor=1.0,
    )


def mini_config(variant: str = "move_fpod", num_instruments: int = 2) -> ModelConfig:
    """Tiny configuration for finite-difference gradient checks."""
    return ModelConfig(
        variant=variant,
        n_bins=8,
        t_chunk=4,
        num_instruments=num_instruments,
        conv_layers=(
            ConvSpec(2, (2, 3), (1, 2), (1, 1)),
            ConvSpec(3, (2, 3), (1, 2), (0, 1)),
        ),
        fc_widths=(8, 8, 8),
        head_kernel=(3, 3),
        embed_dim=4,
        film_trunk=(8, 8, 8),
        scale_factor=0.02,
    )


@dataclass(frozen=True)
class Geometry:
    """Conv stack shape algebra: per-layer output dims and the transpose-conv
    output paddings that make decoding land exactly back on (t_chunk, n_bins)."""

    dims: tuple[tuple[int, int], ...]  # (T, B) after each conv layer
    out_pads: tuple[tuple[int, int], ...]
    flat_size: int


def _conv_dim(d: int, k: int, s: int, p: int) -> tuple[int, int]:
    span = d + 2 * p - k
    if span < 0:
        raise ModelError(f"conv kernel {k} with padding {p} exceeds input extent {d}")
    return span // s + 1, span % s


def solve_geometry(cfg: ModelConfig) -> Geometry:
    dims = []
    out_pads = []
    t, b = cfg.t_chunk, cfg.n_bins
    channels = 1
    for layer in cfg.conv_layers:
        t, rt = _conv_dim(t, layer.kernel[0], layer.stride[0], layer.padding[0])
        b, rb = _conv_dim(b, layer.kernel[1], layer.stride[1], layer.padding[1])
        if t < 1 or b < 1:
            raise ModelError(f"conv stack collapses to {t}x{b}")
        dims.append((t, b))
        out_pads.append((rt, rb))
        channels = layer.out_channels
    return Geometry(tuple(dims), tuple(out_pads), channels * t * b)


def batch_labels(labels: "list[ConditionLabel]", cfg: ModelConfig) -> dict:
    """Pack labels into the tensor dict the model consumes. Labels without an
    instrument are rejected (routing and domain conditioning need it)."""
    for lb in labels:
        if lb.instrument is None:
            raise ModelError("model labels need an instrument id")
        if lb.instrument >= cfg.num_instruments:
            raise ModelError(f"instrument {lb.instrument} out of range for K={cfg.num_instruments}")
    return {
        "pitch": torch.tensor([lb.pitch_class for lb in labels], dtype=torch.long),
        "octave": torch.tensor([lb.octave for lb in labels], dtype=torch.long),
        "instrument": torch.tensor([lb.instrument for lb in labels], dtype=torch.long),
    }


@dataclass
class LatentCode:
    """Diagonal-Gaussian posterior parameters, plus an optional sample."""

    mu: "np.ndarray"
    sigma: "np.ndarray"
    z: "np.ndarray | None" = None


@dataclass
class GaussianOutput:
    """Decoder output Gaussian over one chunk."""

    mu_x: "np.ndarray"
    sigma_x: "np.ndarray"


class _EncoderFront(nn.Module):
    """Domain-specific stage: two strided convs, flatten, first FC."""

    def __init__(self, cfg: ModelConfig, geo: Geometry):
        super().__init__()
        c0, c1 = cfg.conv_layers[0], cfg.conv_layers[1]
        self.conv0 = nn.Conv2d(1, c0.out_channels, c0.kernel, c0.stride, c0.padding)
        self.conv1 = nn.Conv2d(c0.out_channels, c1.out_channels, c1.kernel, c1.stride, c1.padding)
        self.fc0 = nn.Linear(geo.flat_size, cfg.fc_widths[0])


class _DecoderBack(nn.Module):
    """Domain-specific stage: FC back to the conv lattice, two transpose
    convs, Gaussian output heads."""

    def __init__(self, cfg: ModelConfig, geo: Geometry):
        super().__init__()
        c0, c1 = cfg.conv_layers[0], cfg.conv_layers[1]
        self.fc_flat = nn.Linear(cfg.fc_widths[0], geo.flat_size)
        self.convt1 = nn.ConvTranspose2d(
            c1.out_channels, c1.out_channels, c1.kernel, c1.stride, c1.padding,
            output_padding=geo.out_pads[1],
        )
        self.convt0 = nn.ConvTranspose2d(
            c1.out_channels, c0.out_channels, c0.kernel, c0.stride, c0.padding,
            output_padding=geo.out_pads[0],
        )
        # stride-1 output heads with symmetric padding; Conv2d spans the same
        # function class as the transpose form and runs much faster on CPU
        hp = (cfg.head_kernel[0] // 2, cfg.head_kernel[1] // 2)
        self.head_mu = nn.Conv2d(c0.out_channels, 1, cfg.head_kernel, (1, 1), hp)
        self.head_sigma = nn.Conv2d(c0.out_channels, 1, cfg.head_kernel, (1, 1), hp)


class MoveModel(nn.Module):
    """Conditional Gaussian VAE; see module docstring for the variant map."""

    def __init__(self, cfg: ModelConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.cfg = cfg
        self.geometry = solve_geometry(cfg)
        self.act = nn.LeakyReLU(cfg.negative_slope)
        self.modulation_enabled = True  # test hook: False runs the unconditioned net

        n_stacks = 2 if cfg.is_paired else 1
        self.fronts = nn.ModuleList(
            _EncoderFront(cfg, self.geometry) for _ in range(n_stacks)
        )
        self.backs = nn.ModuleList(_DecoderBack(cfg, self.geometry) for _ in range(n_stacks))

        cat = PO_ONEHOT_LEN if cfg.variant == "unit_mmd_cpo" else 0
        w0, w1, w2 = cfg.fc_widths
        self.enc_fc1 = nn.Linear(w0 + cat, w1)
        self.enc_fc2 = nn.Linear(w1, w2)
        self.latent_mu = nn.Linear(w2, cfg.latent_dim)
        self.latent_sigma = nn.Linear(w2, cfg.latent_dim)

        self.dec_fc0 = nn.Linear(cfg.latent_dim + cat, w2)
        self.dec_fc1 = nn.Linear(w2, w1)
        self.dec_fc2 = nn.Linear(w1, w0)

        if cfg.uses_film:
            c0ch = cfg.conv_layers[0].out_channels
            c1ch = cfg.conv_layers[1].out_channels
            enc_sizes = {"E3": w1, "E4": w2}
            dec_sizes = {"D0": w2, "D1": w1}
            if cfg.variant == "move_fpod":
                enc_sizes.update({"E0": c0ch, "E1": c1ch})
                dec_sizes.update({"D4": c1ch, "D5": c0ch})
            k = cfg.num_instruments if cfg.variant == "move_fpod" else None
            self.film_enc = FiLMGenerator(
                enc_sizes, k, cfg.embed_dim, cfg.film_trunk, cfg.negative_slope
            )
            self.film_dec = FiLMGenerator(
                dec_sizes, k, cfg.embed_dim, cfg.film_trunk, cfg.negative_slope
            )
        else:
            self.film_enc = None
            self.film_dec = None

        if dtype != torch.float32:
            self.to(dtype)

    # -- helpers --------------------------------------------------------------

    def _check_labels(self, labels: dict, n: int) -> None:
        for key in ("pitch", "octave", "instrument"):
            if key not in labels:
                raise ModelError(f"labels missing field {key!r}")
            if labels[key].shape[0] != n:
                raise ModelError(f"labels[{key!r}] has wrong batch size")
        if int(labels["instrument"].max()) >= self.cfg.num_instruments:
            raise ModelError(
                f"instrument id {int(labels['instrument'].max())} out of range "
                f"for K={self.cfg.num_instruments}"
            )

    def _film(self, gen: Optional[FiLMGenerator], labels: dict):
        if gen is None or not self.modulation_enabled:
            return None
        instrument = labels["instrument"] if self.cfg.variant == "move_fpod" else None
        return gen(labels["pitch"], labels["octave"], instrument)

    def _mod(self, h, params, name, axis):
        if params is None or name not in params:
            return h
        scale, bias = params[name]
        return film_modulate(h, scale, bias, axis)

    def _route(self, h: torch.Tensor, labels: dict, stage_fn) -> torch.Tensor:
        """Run h through domain-specific stacks (paired) or the shared one."""
        if not self.cfg.is_paired:
            return stage_fn(0, h, None)
        inst = labels["instrument"]
        out = None
        for d in range(2):
            mask = inst == d
            if not bool(mask.any()):
                continue
            part = stage_fn(d, h[mask], mask)
            if out is None:
                out = h.new_zeros((h.shape[0],) + part.shape[1:])
            out[mask] = part
        if out is None:
            raise ModelError("batch routed to no domain stack")
        return out

    # -- encoding / decoding ---------------------------------------------------

    def encode(self, x: torch.Tensor, labels: dict) -> tuple[torch.Tensor, torch.Tensor]:
        """q(z|x): x [N, T, B] normalized chunks -> (mu, sigma) [N, latent]."""
        if x.dim() != 3 or x.shape[1:] != (self.cfg.t_chunk, self.cfg.n_bins):
            raise ModelError(
                f"expected input [N, {self.cfg.t_chunk}, {self.cfg.n_bins}], got {tuple(x.shape)}"
            )
        self._check_labels(labels, x.shape[0])
        params = self._film(self.film_enc, labels)

        def front(d, h, mask):
            p = params
            if p is not None and mask is not None:
                p = {k: (s[mask], b[mask]) for k, (s, b) in params.items()}
            f = self.fronts[d]
            h = h.unsqueeze(1)
            h = self.act(instance_norm(f.conv0(h), "channel"))
            h = self._mod(h, p, "E0", "channel")
            h = self.act(instance_norm(f.conv1(h), "channel"))
            h = self._mod(h, p, "E1", "channel")
            h = self.act(instance_norm(f.fc0(h.flatten(1)), "feature"))
            return h

        h = self._route(x, labels, front)
        if self.cfg.variant == "unit_mmd_cpo":
            h = torch.cat([h, onehot_batch(labels["pitch"], labels["octave"], h.dtype)], dim=1)
        h = self.act(instance_norm(self.enc_fc1(h), "feature"))
        h = self._mod(h, params, "E3", "feature")
        h = self.act(instance_norm(self.enc_fc2(h), "feature"))
        h = self._mod(h, params, "E4", "feature")
        mu = self.latent_mu(h)
        sigma = torch.clamp(
            F.softplus(self.latent_sigma(h)) + 1e-3, SIGMA_Z_MIN, SIGMA_Z_MAX
        )
        return mu, sigma

    def decode(self, z: torch.Tensor, labels: dict) -> tuple[torch.Tensor, torch.Tensor]:
        """p(x|z): z [N, latent] -> (mu_x, sigma_x), each [N, T, B]."""
        if z.dim() != 2 or z.shape[1] != self.cfg.latent_dim:
            raise ModelError(f"expected latent [N, {self.cfg.latent_dim}], got {tuple(z.shape)}")
        self._check_labels(labels, z.shape[0])
        params = self._film(self.film_dec, labels)

        h = z
        if self.cfg.variant == "unit_mmd_cpo":
            h = torch.cat([h, onehot_batch(labels["pitch"], labels["octave"], h.dtype)], dim=1)
        h = self.act(instance_norm(self.dec_fc0(h), "feature"))
        h = self._mod(h, params, "D0", "feature")
        h = self.act(instance_norm(self.dec_fc1(h), "feature"))
        h = self._mod(h, params, "D1", "feature")
        h = self.act(instance_norm(self.dec_fc2(h), "feature"))

        c1 = self.cfg.conv_layers[1].out_channels
        t1, b1 = self.geometry.dims[1]

        def back(d, h, mask):
            p = params
            if p is not None and mask is not None:
                p = {k: (s[mask], b[mask]) for k, (s, b) in params.items()}
            g = self.backs[d]
            h = self.act(instance_norm(g.fc_flat(h), "feature"))
            h = h.view(-1, c1, t1, b1)
            h = self.act(instance_norm(g.convt1(h), "channel"))
            h = self._mod(h, p, "D4", "channel")
            h = self.act(instance_norm(g.convt0(h), "channel"))
            h = self._mod(h, p, "D5", "channel")
            mu_x = g.head_mu(h).squeeze(1)
            sigma_x = torch.clamp(
                F.softplus(g.head_sigma(h).squeeze(1)) + 1e-3, SIGMA_X_MIN, SIGMA_X_MAX
            )
            return torch.stack([mu_x, sigma_x], dim=1)

        out = self._route(h, labels, back)
        return out[:, 0], out[:, 1]

    def generate(self, z: torch.Tensor, labels: dict) -> torch.Tensor:
        """Generation path: tanh of the decoded mean, values in [-1, 1]."""
        mu_x, _ = self.decode(z, labels)
        return torch.tanh(mu_x)

    def reparameterize(
        self, mu: torch.Tensor, sigma: torch.Tensor, generator: torch.Generator
    ) -> torch.Tensor:
        """z = mu + sigma * eps with eps ~ N(0, I); gradients flow to both."""
        eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype)
        return mu + sigma * eps

    def forward_loss_pass(
        self, x: torch.Tensor, labels: dict, beta: float, generator: torch.Generator
    ) -> dict:
        """One differentiable pass: posteriors, samples, reconstruction
        Gaussians and per-domain NLL/KLD terms."""
        from .objectives import gaussian_nll, kld_to_standard_normal

        mu_z, sigma_z = self.encode(x, labels)
        z = self.reparameterize(mu_z, sigma_z, generator)
        mu_x, sigma_x = self.decode(z, labels)
        # likelihood mean is the tanh'd decoder mean, as on the generation path
        mean_x = torch.tanh(mu_x)

        nll = {}
        kld = {}
        inst = labels["instrument"]
        for d in sorted(set(int(i) for i in inst.tolist())):
            mask = inst == d
            nll[d] = gaussian_nll(x[mask], mean_x[mask], sigma_x[mask])
            kld[d] = kld_to_standard_normal(mu_z[mask], sigma_z[mask])

        for name, val in (("nll", nll), ("kld", kld)):
            for d, v in val.items():
                if not torch.isfinite(v):
                    layer = self._first_nonfinite_layer(x, labels, generator)
                    raise ModelError(
                        f"non-finite {name} for domain {d} (first bad layer: {layer})"
                    )
        return {
            "mu_z": mu_z, "sigma_z": sigma_z, "z": z,
            "mu_x": mu_x, "sigma_x": sigma_x,
            "nll": nll, "kld": kld,
        }

    # -- single-item numpy conveniences ---------------------------------------

    def encode_chunk(self, chunk_data: np.ndarray, label: ConditionLabel) -> LatentCode:
        """Posterior of one chunk; deterministic (no sampling)."""
        x = torch.as_tensor(np.asarray(chunk_data)[None], dtype=next(self.parameters()).dtype)
        with torch.no_grad():
            mu, sigma = self.encode(x, batch_labels([label], self.cfg))
        return LatentCode(mu[0].numpy(), sigma[0].numpy())

    def decode_latent(self, z: np.ndarray, label: ConditionLabel) -> GaussianOutput:
        """Decoder Gaussian at one latent point."""
        zt = torch.as_tensor(np.asarray(z, dtype=np.float64)[None], dtype=next(self.parameters()).dtype)
        with torch.no_grad():
            mu_x, sigma_x = self.decode(zt, batch_labels([label], self.cfg))
        return GaussianOutput(mu_x[0].numpy(), sigma_x[0].numpy())

    def _first_nonfinite_layer(self, x, labels, generator) -> str:
        """Diagnostic re-run naming the first module with a non-finite output."""
        bad = []

        def hook(name):
            def fn(_mod, _inp, out):
                tensors = out if isinstance(out, tuple) else (out,)
                for t in tensors:
                    if isinstance(t, torch.Tensor) and not torch.isfinite(t).all():
                        if not bad:
                            bad.append(name)
            return fn

        handles = [m.register_forward_hook(hook(n)) for n, m in self.named_modules() if n]
        try:
            with torch.no_grad():
                mu, sigma = self.encode(x, labels)
                z = self.reparameterize(mu, sigma, generator)
                self.decode(z, labels)
        finally:
            for h in handles:
                h.remove()
        return bad[0] if bad else "unknown (inputs?)"
