"""Loss terms: Gaussian NLL, closed-form KLD, multi-kernel MMD, cycle
consistency and the weighted composite objective.

Reduction convention everywhere: sum over elements/dimensions of one sample,
mean over the batch. MMD is the biased V-statistic, guaranteed >= 0 up to
floating-point round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch


class ObjectiveError(Exception):
    pass


@dataclass(frozen=True)
class KernelBank:
    """RBF mixture k(a, b) = sum_i exp(-alpha_i * ||a - b||^2)."""

    alphas: tuple[float, ...] = (0.05, 0.1, 1.0)

    def __post_init__(self):
        if not self.alphas or any(a <= 0 for a in self.alphas):
            raise ValueError("kernel widths must all be positive")


def _reduce(per_element: torch.Tensor) -> torch.Tensor:
    """Sum over per-sample elements, mean over the batch (dim 0)."""
    if per_element.dim() <= 1:
        return per_element.sum()
    return per_element.flatten(1).sum(dim=1).mean()


def gaussian_nll(x: torch.Tensor, mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """Negative log-likelihood of x under N(mu, sigma^2), elementwise diagonal."""
    if x.shape != mu.shape or x.shape != sigma.shape:
        raise ObjectiveError(f"shape mismatch: {tuple(x.shape)} vs {tuple(mu.shape)}")
    if not (torch.isfinite(x).all() and torch.isfinite(mu).all() and torch.isfinite(sigma).all()):
        raise ObjectiveError("non-finite input to gaussian_nll")
    var = sigma * sigma
    per = 0.5 * torch.log(2.0 * math.pi * var) + (x - mu) ** 2 / (2.0 * var)
    return _reduce(per)


def kld_to_standard_normal(mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """KL[N(mu, sigma^2) || N(0, I)] in closed form."""
    if mu.shape != sigma.shape:
        raise ObjectiveError("mu/sigma shape mismatch")
    if not (torch.isfinite(mu).all() and torch.isfinite(sigma).all()):
        raise ObjectiveError("non-finite input to kld_to_standard_normal")
    per = 0.5 * (mu * mu + sigma * sigma - 1.0 - 2.0 * torch.log(sigma))
    return _reduce(per)


# --- MMD ---------------------------------------------------------------------

def _sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x2 = np.einsum("id,id->i", x, x)
    y2 = np.einsum("id,id->i", y, y)
    d2 = x2[:, None] + y2[None, :] - 2.0 * (x @ y.T)
    return np.maximum(d2, 0.0)


def _kernel_sum(d2: np.ndarray, bank: KernelBank) -> float:
    total = 0.0
    for a in bank.alphas:
        total += float(np.sum(np.exp(-a * d2)))
    return total


def mmd(X: np.ndarray, Y: np.ndarray, bank: KernelBank = KernelBank()) -> float:
    """Biased MMD estimator between two sample sets [m, d] and [n, d].

    Computed in float64 with a canonical argument order, so mmd(X, Y) and
    mmd(Y, X) are bit-identical and mmd(X, X) is exactly 0.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ObjectiveError(f"incompatible sample shapes {X.shape} and {Y.shape}")
    if X.shape[0] < 1 or Y.shape[0] < 1:
        raise ObjectiveError("need at least one sample per set")
    if X.shape[0] < Y.shape[0] or (
        X.shape[0] == Y.shape[0] and X.tobytes() > Y.tobytes()
    ):
        X, Y = Y, X
    m, n = X.shape[0], Y.shape[0]
    kxx = _kernel_sum(_sq_dists(X, X), bank) / (m * m)
    kyy = _kernel_sum(_sq_dists(Y, Y), bank) / (n * n)
    kxy = _kernel_sum(_sq_dists(X, Y), bank) / (m * n)
    return kxx + kyy - 2.0 * kxy


def mmd_reference(X: np.ndarray, Y: np.ndarray, bank: KernelBank = KernelBank()) -> float:
    """Independent brute-force double-sum oracle (exact summation)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    m, n = len(X), len(Y)

    def k(a, b):
        d2 = float(np.dot(a - b, a - b))
        return math.fsum(math.exp(-alpha * d2) for alpha in bank.alphas)

    xx = math.fsum(k(X[i], X[j]) for i in range(m) for j in range(m)) / (m * m)
    yy = math.fsum(k(Y[i], Y[j]) for i in range(n) for j in range(n)) / (n * n)
    xy = math.fsum(k(X[i], Y[j]) for i in range(m) for j in range(n)) / (m * n)
    return xx + yy - 2.0 * xy


def mmd_torch(X: torch.Tensor, Y: torch.Tensor, bank: KernelBank = KernelBank()) -> torch.Tensor:
    """Differentiable biased MMD estimator (training path)."""
    if X.dim() != 2 or Y.dim() != 2 or X.shape[1] != Y.shape[1]:
        raise ObjectiveError(f"incompatible sample shapes {tuple(X.shape)} and {tuple(Y.shape)}")

    def kernel_mean(a, b):
        a2 = (a * a).sum(dim=1)
        b2 = (b * b).sum(dim=1)
        d2 = torch.clamp(a2[:, None] + b2[None, :] - 2.0 * (a @ b.T), min=0.0)
        total = torch.zeros((), dtype=a.dtype)
        for alpha in bank.alphas:
            total = total + torch.exp(-alpha * d2).mean()
        return total

    return kernel_mean(X, X) + kernel_mean(Y, Y) - 2.0 * kernel_mean(X, Y)


def cycle_consistency_nll(
    x_original: torch.Tensor, mu_cycled: torch.Tensor, sigma_cycled: torch.Tensor
) -> torch.Tensor:
    """NLL of the original chunk under the double-transfer reconstruction."""
    return gaussian_nll(x_original, mu_cycled, sigma_cycled)


# --- composite ----------------------------------------------------------------

@dataclass(frozen=True)
class Gates:
    mmd_on: bool = False
    cc_on: bool = False


@dataclass
class LossBreakdown:
    """Per-term record of one optimization step (or epoch aggregate)."""

    nll_recon: dict[int, float] = field(default_factory=dict)
    kld: dict[int, float] = field(default_factory=dict)
    mmd_transfer: dict[tuple[int, int], float] = field(default_factory=dict)
    cc_nll: dict[int, float] = field(default_factory=dict)
    total: float = 0.0
    beta: float = 0.0
    lambda_mmd: float = 0.0
    lambda_cc: float = 0.0
    gates: Gates = field(default_factory=Gates)

    def to_record(self, epoch: int) -> dict:
        return {
            "epoch": epoch,
            "nll_recon": {str(k): v for k, v in self.nll_recon.items()},
            "kld": {str(k): v for k, v in self.kld.items()},
            "mmd_transfer": {
                f"{s}->{t}": self.mmd_transfer[(s, t)] for (s, t) in sorted(self.mmd_transfer)
            },
            "cc_nll": {str(k): v for k, v in self.cc_nll.items()},
            "total": self.total,
            "beta": self.beta,
            "lambda_mmd": self.lambda_mmd,
            "lambda_cc": self.lambda_cc,
            "mmd_on": self.gates.mmd_on,
            "cc_on": self.gates.cc_on,
        }


def composite_loss(
    nll_recon: dict[int, torch.Tensor],
    kld: dict[int, torch.Tensor],
    mmd_transfer: dict[tuple[int, int], torch.Tensor],
    cc_nll: dict[int, torch.Tensor],
    beta: float,
    lambda_mmd: float,
    lambda_cc: float,
    gates: Gates,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Weighted sum of all terms; gated-off terms contribute exactly nothing.

    total = sum_d (NLL_d + beta * KLD_d)
          + lambda_mmd * sum_{ordered pairs} MMD_{src->tgt}   (if gated on)
          + lambda_cc * sum_d CC_d                            (if gated on)
    """
    if not nll_recon:
        raise ObjectiveError("composite loss needs at least one reconstruction term")
    terms = []
    for d in sorted(nll_recon):
        terms.append(nll_recon[d])
        terms.append(beta * kld[d])
    if gates.mmd_on:
        for pair in sorted(mmd_transfer):
            terms.append(lambda_mmd * mmd_transfer[pair])
    if gates.cc_on:
        for d in sorted(cc_nll):
            terms.append(lambda_cc * cc_nll[d])
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    def val(t):
        return float(t.detach()) if isinstance(t, torch.Tensor) else float(t)

    breakdown = LossBreakdown(
        nll_recon={d: val(v) for d, v in nll_recon.items()},
        kld={d: val(v) for d, v in kld.items()},
        mmd_transfer=(
            {p: val(v) for p, v in mmd_transfer.items()} if gates.mmd_on else {}
        ),
        cc_nll={d: val(v) for d, v in cc_nll.items()} if gates.cc_on else {},
        total=val(total),
        beta=beta,
        lambda_mmd=lambda_mmd,
        lambda_cc=lambda_cc,
        gates=gates,
    )
    return total, breakdown
