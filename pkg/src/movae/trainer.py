"""Optimization loop: KL warmup and objective gating schedules, Xavier
initialization, a from-scratch Adam, batch assembly with per-batch resampling
of MMD target sets, metrics logging and checkpointing.

Determinism contract: the (data seed, init seed, train seed) triple fixes the
final checkpoint bit-exactly on one platform.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .checkpoint import ModelCheckpoint, checkpoint_from_model, save_checkpoint
from .conditioning import FiLMGenerator
from .corpus import DatasetSplit
from .model import ModelConfig, MoveModel, batch_labels
from .objectives import (
    Gates,
    KernelBank,
    LossBreakdown,
    composite_loss,
    gaussian_nll,
    mmd_torch,
)

logger = logging.getLogger("movae.trainer")


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    total_epochs: int = 60
    warmup_start_epoch: int = 5
    mmd_gate_fraction: float = 0.27
    cc_gate_fraction: float = 0.40
    batch_size: int = 128
    mmd_target_batch: int = 2048
    lr: float = 1e-4
    lambda_mmd: float = 1e5
    lambda_cc: float = 1.0
    kernel_alphas: tuple[float, ...] = (0.05, 0.1, 1.0)
    seed: int = 0
    init_seed: int | None = None  # defaults to seed + 1
    checkpoint_every: int = 0  # 0 = final checkpoint only

    def __post_init__(self):
        if not 0 <= self.warmup_start_epoch < self.total_epochs:
            raise ValueError("need 0 <= warmup_start_epoch < total_epochs")
        for frac in (self.mmd_gate_fraction, self.cc_gate_fraction):
            if not 0.0 <= frac <= 1.0:
                raise ValueError("gate fractions must lie in [0, 1]")
        if self.batch_size < 1 or self.mmd_target_batch < 1:
            raise ValueError("batch sizes must be >= 1")

    @property
    def effective_init_seed(self) -> int:
        return self.seed + 1 if self.init_seed is None else self.init_seed


def paper_schedule_config(total_epochs: int = 100, **kw) -> TrainConfig:
    """Literal gate epochs 40/60: transfer after 40 epochs, cycle after 60."""
    return TrainConfig(
        total_epochs=total_epochs,
        mmd_gate_fraction=40.0 / total_epochs,
        cc_gate_fraction=60.0 / total_epochs,
        **kw,
    )


def beta_schedule(epoch: int, cfg: TrainConfig) -> float:
    """KL weight: 0 before warmup_start, then a linear ramp hitting 1 at
    half the total epoch count, 1 afterwards."""
    if epoch < cfg.warmup_start_epoch:
        return 0.0
    ramp_end = cfg.total_epochs / 2.0
    denom = ramp_end - cfg.warmup_start_epoch
    if denom <= 0:
        return 1.0
    return min(1.0, (epoch - cfg.warmup_start_epoch) / denom)


def gate_epochs(cfg: TrainConfig) -> tuple[int, int]:
    return (
        int(round(cfg.mmd_gate_fraction * cfg.total_epochs)),
        int(round(cfg.cc_gate_fraction * cfg.total_epochs)),
    )


def objective_gates(epoch: int, cfg: TrainConfig) -> Gates:
    mmd_at, cc_at = gate_epochs(cfg)
    return Gates(mmd_on=epoch >= mmd_at, cc_on=epoch >= cc_at)


# --- initialization ------------------------------------------------------------

def xavier_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def xavier_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    a = xavier_bound(fan_in, fan_out)
    return rng.uniform(-a, a, size=shape)


def _fans(module: nn.Module) -> tuple[int, int]:
    w = module.weight
    if isinstance(module, nn.Linear):
        return w.shape[1], w.shape[0]
    if isinstance(module, nn.Conv2d):
        k = w.shape[2] * w.shape[3]
        return w.shape[1] * k, w.shape[0] * k
    if isinstance(module, nn.ConvTranspose2d):
        k = w.shape[2] * w.shape[3]
        return w.shape[0] * k, w.shape[1] * k
    if isinstance(module, nn.Embedding):
        return w.shape[0], w.shape[1]
    raise TrainingError(f"no fan rule for module type {type(module).__name__}")


def init_model_weights(model: MoveModel, seed: int) -> None:
    """Xavier-uniform weights, zero biases; FiLM generator output heads stay
    zero so modulation starts as the identity. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    film_heads = set()
    for name, module in model.named_modules():
        if isinstance(module, FiLMGenerator):
            for hname, head in module.heads.items():
                film_heads.add(f"{name}.heads.{hname}")
    with torch.no_grad():
        for name, module in model.named_modules():
            if not isinstance(module, (nn.Linear, nn.Conv2d, nn.ConvTranspose2d, nn.Embedding)):
                continue
            if name in film_heads:
                module.weight.zero_()
                if getattr(module, "bias", None) is not None:
                    module.bias.zero_()
                continue
            fan_in, fan_out = _fans(module)
            w = xavier_uniform(tuple(module.weight.shape), fan_in, fan_out, rng)
            module.weight.copy_(torch.as_tensor(w, dtype=module.weight.dtype))
            if getattr(module, "bias", None) is not None:
                module.bias.zero_()


# --- optimizer -------------------------------------------------------------------

@dataclass
class OptimizerState:
    names: list[str]
    m: list[torch.Tensor]
    v: list[torch.Tensor]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_optimizer(model: nn.Module) -> OptimizerState:
    names, m, v = [], [], []
    for name, p in model.named_parameters():
        names.append(name)
        m.append(torch.zeros_like(p))
        v.append(torch.zeros_like(p))
    return OptimizerState(names, m, v)


def adam_step(
    params: list[torch.Tensor],
    grads: list[torch.Tensor],
    state: OptimizerState,
    lr: float,
) -> None:
    """Standard bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    with torch.no_grad():
        for i, (p, g) in enumerate(zip(params, grads)):
            if not torch.isfinite(g).all():
                raise TrainingError(f"non-finite gradient for parameter {state.names[i]!r}")
            state.m[i].mul_(state.beta1).add_(g, alpha=1.0 - state.beta1)
            state.v[i].mul_(state.beta2).addcmul_(g, g, value=1.0 - state.beta2)
            m_hat = state.m[i] / bc1
            v_hat = state.v[i] / bc2
            p.add_(-lr * m_hat / (torch.sqrt(v_hat) + state.eps))


# --- training loop -----------------------------------------------------------------

def _aggregate(breakdowns: list[LossBreakdown]) -> LossBreakdown:
    """Mean of each component over the epoch's batches."""
    def mean_dict(dicts):
        keys = sorted({k for d in dicts for k in d})
        return {
            k: float(np.mean([d[k] for d in dicts if k in d])) for k in keys
        }

    last = breakdowns[-1]
    return LossBreakdown(
        nll_recon=mean_dict([b.nll_recon for b in breakdowns]),
        kld=mean_dict([b.kld for b in breakdowns]),
        mmd_transfer=mean_dict([b.mmd_transfer for b in breakdowns]),
        cc_nll=mean_dict([b.cc_nll for b in breakdowns]),
        total=float(np.mean([b.total for b in breakdowns])),
        beta=last.beta,
        lambda_mmd=last.lambda_mmd,
        lambda_cc=last.lambda_cc,
        gates=last.gates,
    )


def compute_batch_loss(
    model: MoveModel,
    xb: torch.Tensor,
    lb: dict,
    pools: dict[int, torch.Tensor],
    beta: float,
    gates: Gates,
    tcfg: TrainConfig,
    bank: KernelBank,
    gen: torch.Generator,
    np_rng: np.random.Generator,
):
    """One differentiable composite-loss evaluation on a batch.

    Randomness comes only from the two passed generators (reparameterization
    noise and MMD target sampling), so reseeding them reproduces the exact
    same loss value for fixed parameters."""
    domains = sorted(pools)
    fp = model.forward_loss_pass(xb, lb, beta, gen)
    mmd_terms: dict[tuple[int, int], torch.Tensor] = {}
    cc_terms: dict[int, torch.Tensor] = {}
    if gates.mmd_on or gates.cc_on:
        inst = lb["instrument"]
        present = sorted(set(int(i) for i in inst.tolist()))
        transferred: dict[tuple[int, int], tuple[torch.Tensor, dict]] = {}
        masks = {d: inst == d for d in present}
        for src in present:
            for tgt in domains:
                if tgt == src:
                    continue
                mask = masks[src]
                lb_t = {
                    "pitch": lb["pitch"][mask],
                    "octave": lb["octave"][mask],
                    "instrument": torch.full_like(lb["instrument"][mask], tgt),
                }
                mu_t, _ = model.decode(fp["z"][mask], lb_t)
                transferred[(src, tgt)] = (torch.tanh(mu_t), lb_t)
        if gates.mmd_on:
            for (src, tgt), (xfer, _) in transferred.items():
                pool = pools[tgt]
                k = min(tcfg.mmd_target_batch, len(pool))
                pick = torch.as_tensor(np_rng.choice(len(pool), size=k, replace=False))
                mmd_terms[(src, tgt)] = mmd_torch(xfer.flatten(1), pool[pick], bank)
        if gates.cc_on:
            for src in present:
                vals = []
                mask = masks[src]
                for tgt in domains:
                    if tgt == src:
                        continue
                    xfer, lb_t = transferred[(src, tgt)]
                    mu2, s2 = model.encode(xfer, lb_t)
                    z2 = model.reparameterize(mu2, s2, gen)
                    lb_back = dict(lb_t)
                    lb_back["instrument"] = torch.full_like(lb_t["instrument"], src)
                    mu_c, s_c = model.decode(z2, lb_back)
                    vals.append(gaussian_nll(xb[mask], torch.tanh(mu_c), s_c))
                cc_terms[src] = sum(vals) / len(vals)
    return composite_loss(
        fp["nll"], fp["kld"], mmd_terms, cc_terms,
        beta, tcfg.lambda_mmd, tcfg.lambda_cc, gates,
    )


def train(
    dataset: DatasetSplit,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    out_dir=None,
    metrics_path=None,
    disable_mmd_term: bool = False,
    disable_cc_term: bool = False,
) -> tuple[ModelCheckpoint, list[dict]]:
    """Run the full schedule and return (final checkpoint, epoch records).

    The disable_*_term switches remove a term's code path entirely; they
    exist to verify that gated-off terms are exactly inert.
    """
    if dataset.num_instruments < 2:
        raise TrainingError("transfer training needs at least 2 instrument domains")
    if mcfg.num_instruments != dataset.num_instruments:
        raise TrainingError(
            f"model expects K={mcfg.num_instruments} but dataset has {dataset.num_instruments}"
        )

    gen = torch.Generator().manual_seed(tcfg.seed)
    rng = np.random.default_rng(tcfg.seed)
    model = MoveModel(mcfg)
    init_model_weights(model, tcfg.effective_init_seed)

    data, labels, sources = dataset.chunks_of(dataset.train)
    n = len(data)
    if n == 0:
        raise TrainingError("empty training split")
    x_all = torch.as_tensor(data, dtype=torch.float32)
    lbl_all = batch_labels(labels, mcfg)

    pools = {
        inst: torch.as_tensor(arr.reshape(len(arr), -1), dtype=torch.float32)
        for inst, arr in dataset.train_chunks_by_instrument().items()
    }
    domains = sorted(pools)
    bank = KernelBank(tcfg.kernel_alphas)
    for inst, pool in pools.items():
        if len(pool) < tcfg.mmd_target_batch:
            logger.info(
                "MMD target batch %d capped at domain %d size %d",
                tcfg.mmd_target_batch, inst, len(pool),
            )

    params = list(model.parameters())
    state = init_optimizer(model)
    records: list[dict] = []
    metrics_file = open(metrics_path, "w") if metrics_path else None

    try:
        for epoch in range(tcfg.total_epochs):
            beta = beta_schedule(epoch, tcfg)
            gates = objective_gates(epoch, tcfg)
            mmd_active = gates.mmd_on and not disable_mmd_term
            cc_active = gates.cc_on and not disable_cc_term
            perm = rng.permutation(n)
            batch_breakdowns = []

            for start in range(0, n, tcfg.batch_size):
                idx = torch.as_tensor(perm[start : start + tcfg.batch_size])
                xb = x_all[idx]
                lb = {k: v[idx] for k, v in lbl_all.items()}
                total, breakdown = compute_batch_loss(
                    model, xb, lb, pools, beta, Gates(mmd_active, cc_active),
                    tcfg, bank, gen, rng,
                )
                if not torch.isfinite(total):
                    batch_sources = [sources[i] for i in idx.tolist()[:4]]
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch} (batch starts with {batch_sources})"
                    )
                for p in params:
                    p.grad = None
                total.backward()
                grads = [
                    p.grad if p.grad is not None else torch.zeros_like(p) for p in params
                ]
                adam_step(params, grads, state, tcfg.lr)
                batch_breakdowns.append(breakdown)

            record = _aggregate(batch_breakdowns).to_record(epoch)
            records.append(record)
            if metrics_file:
                metrics_file.write(json.dumps(record) + "\n")
                metrics_file.flush()
            if (
                out_dir
                and tcfg.checkpoint_every
                and (epoch + 1) % tcfg.checkpoint_every == 0
                and epoch + 1 < tcfg.total_epochs
            ):
                ckpt = _make_checkpoint(model, dataset, tcfg, epoch + 1, gen, rng)
                save_checkpoint(ckpt, Path(out_dir) / f"epoch{epoch + 1:04d}")
    finally:
        if metrics_file:
            metrics_file.close()

    ckpt = _make_checkpoint(model, dataset, tcfg, tcfg.total_epochs, gen, rng)
    if out_dir:
        save_checkpoint(ckpt, out_dir)
    return ckpt, records


def _make_checkpoint(model, dataset, tcfg, epoch, gen, rng) -> ModelCheckpoint:
    return checkpoint_from_model(
        model,
        dataset.stats,
        dataset.spectral_config,
        epoch,
        dataset.instrument_names,
        seeds={
            "train": tcfg.seed,
            "init": tcfg.effective_init_seed,
            "data": dataset.seed,
        },
        numpy_rng_state=json.loads(json.dumps(rng.bit_generator.state)),
        torch_rng_state=bytes(gen.get_state().numpy().tobytes()),
    )
