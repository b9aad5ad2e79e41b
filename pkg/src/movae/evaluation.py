"""Quantitative evaluation: RMSE, log-spectral distortion, MMD score,
k-nearest-neighbour two-sample test, audio descriptors, descriptor
distribution comparison and latent topology grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.spatial.distance import cdist
from scipy.stats import wasserstein_distance

from .conditioning import ConditionLabel
from .corpus import DatasetSplit
from .model import MoveModel, batch_labels
from .objectives import KernelBank, mmd
from .spectral import NormStats, denormalize_array, mel_filterbank
from .transfer import TransferRequest, map_chunks, reconstruct_chunks, transfer_labels

EVAL_BANK = KernelBank((0.05,))  # transfer/reconstruction scores use this width
DESCRIPTOR_NAMES = ("flatness", "centroid", "rolloff", "loudness")
LOUDNESS_EPS = 1e-10
ROLLOFF_FRACTION = 0.95


class EvaluationError(Exception):
    pass


def rmse(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Root of the summed squared error (no mean), per the score definition."""
    x, x_hat = np.asarray(x), np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise EvaluationError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    return float(np.sqrt(((x - x_hat) ** 2).sum()))


def lsd(x_lin: np.ndarray, x_hat_lin: np.ndarray) -> float:
    """Log-spectral distortion on linear (floored) magnitudes."""
    x_lin, x_hat_lin = np.asarray(x_lin), np.asarray(x_hat_lin)
    if x_lin.shape != x_hat_lin.shape:
        raise EvaluationError(f"shape mismatch {x_lin.shape} vs {x_hat_lin.shape}")
    term = 10.0 * np.log10(x_lin ** 2 / x_hat_lin ** 2)
    return float(np.sqrt((term ** 2).sum()))


@dataclass(frozen=True)
class KnnResult:
    accuracy: float
    raw_score: int


def knn_two_sample(X: np.ndarray, Y: np.ndarray, k: int = 10) -> KnnResult:
    """Nearest-neighbour label agreement over the pooled samples.

    accuracy = mean fraction of each point's k nearest pool neighbours
    (self excluded) sharing its origin label; 0.5 means indistinguishable
    sets. raw_score is the total same-label neighbour count.
    """
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    Y = np.asarray(Y, dtype=np.float64).reshape(len(Y), -1)
    pool = np.vstack([X, Y])
    n = len(pool)
    if n <= k:
        raise EvaluationError(f"need more than k={k} pooled points, got {n}")
    labels = np.concatenate([np.zeros(len(X)), np.ones(len(Y))])
    d = cdist(pool, pool)
    np.fill_diagonal(d, np.inf)
    nn_idx = np.argpartition(d, k - 1, axis=1)[:, :k]
    same = labels[nn_idx] == labels[:, None]
    return KnnResult(accuracy=float(same.mean()), raw_score=int(same.sum()))


@dataclass(frozen=True)
class DescriptorFrame:
    flatness: float
    centroid: float
    rolloff: float
    loudness: float

    def as_dict(self) -> dict:
        return {
            "flatness": self.flatness,
            "centroid": self.centroid,
            "rolloff": self.rolloff,
            "loudness": self.loudness,
        }


def descriptors(magnitudes: np.ndarray, bin_centers: np.ndarray) -> DescriptorFrame:
    """Per-frame audio descriptors of one linear magnitude spectrum."""
    a = np.asarray(magnitudes, dtype=np.float64)
    if a.shape != np.asarray(bin_centers).shape:
        raise EvaluationError("magnitude/bin_centers length mismatch")
    if np.any(a < 0):
        raise EvaluationError("magnitudes must be non-negative")
    energy = a * a
    total_energy = energy.sum()
    if total_energy == 0.0:
        return DescriptorFrame(0.0, 0.0, 0.0, 10.0 * np.log10(LOUDNESS_EPS))
    if np.all(a > 0):
        flatness = float(np.exp(np.mean(np.log(a))) / np.mean(a))
    else:
        flatness = 0.0  # geometric mean vanishes with any zero bin
    centroid = float((bin_centers * a).sum() / a.sum())
    cum = np.cumsum(energy)
    rolloff = float(bin_centers[int(np.searchsorted(cum, ROLLOFF_FRACTION * total_energy))])
    loudness = float(10.0 * np.log10(total_energy + LOUDNESS_EPS))
    return DescriptorFrame(flatness, centroid, rolloff, loudness)


def chunk_descriptor_values(
    chunks_lin: np.ndarray, bin_centers: np.ndarray
) -> dict[str, np.ndarray]:
    """Pool per-frame descriptors over a chunk set [N, T, B]."""
    frames = np.asarray(chunks_lin).reshape(-1, np.asarray(chunks_lin).shape[-1])
    values = {name: np.empty(len(frames)) for name in DESCRIPTOR_NAMES}
    for i, frame in enumerate(frames):
        d = descriptors(frame, bin_centers)
        values["flatness"][i] = d.flatness
        values["centroid"][i] = d.centroid
        values["rolloff"][i] = d.rolloff
        values["loudness"][i] = d.loudness
    return values


def to_linear(chunks_norm: np.ndarray, stats: NormStats, floor: float) -> np.ndarray:
    """Normalized model-space chunks -> floored linear magnitudes."""
    return np.maximum(np.exp(denormalize_array(chunks_norm, stats)), floor)


# --- report -----------------------------------------------------------------

@dataclass
class EvalReport:
    instrument_names: list[str]
    reconstruction: dict[int, dict[str, float]] = field(default_factory=dict)
    transfer: dict[tuple[int, int], dict[str, float]] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = ["# reconstructions", "instrument\tRMSE\tLSD\tMMD(a=0.05)\tkNN(k=10)\tkNN raw"]
        for inst in sorted(self.reconstruction):
            r = self.reconstruction[inst]
            lines.append(
                f"{self.instrument_names[inst]}\t{r['rmse']:.4f}\t{r['lsd']:.2f}\t"
                f"{r['mmd']:.3e}\t{r['knn_accuracy']:.4f}\t{int(r['knn_raw'])}"
            )
        lines += ["", "# transfers", "source->target\tMMD(a=0.05)\tkNN(k=10)\tkNN raw"]
        for (src, tgt) in sorted(self.transfer):
            t = self.transfer[(src, tgt)]
            lines.append(
                f"{self.instrument_names[src]}->{self.instrument_names[tgt]}\t"
                f"{t['mmd']:.3e}\t{t['knn_accuracy']:.4f}\t{int(t['knn_raw'])}"
            )
        return "\n".join(lines) + "\n"


def evaluate(model: MoveModel, dataset: DatasetSplit) -> EvalReport:
    """Reconstruction metrics per domain plus transfer metrics per ordered
    pair, all on the test split with posterior-mean (deterministic) encoding."""
    by_inst = dataset.test_records_by_instrument()
    if not by_inst:
        raise EvaluationError("empty test split")
    stats = dataset.stats
    floor = dataset.spectral_config.floor if dataset.spectral_config else 6e-5
    report = EvalReport(instrument_names=list(dataset.instrument_names))

    test_chunks: dict[int, np.ndarray] = {}
    test_labels: dict[int, list[ConditionLabel]] = {}
    for inst, records in by_inst.items():
        data, labels, _ = dataset.chunks_of(records)
        test_chunks[inst] = data
        test_labels[inst] = labels

    def knn_k(n_pool: int) -> int:
        return min(10, n_pool - 1)  # k=10 whenever the pool allows it

    for inst in sorted(test_chunks):
        x = test_chunks[inst]
        recon = reconstruct_chunks(model, x, test_labels[inst])
        per_rmse = [rmse(a, b) for a, b in zip(x, recon)]
        x_lin = to_linear(x, stats, floor)
        r_lin = to_linear(recon, stats, floor)
        per_lsd = [lsd(a, b) for a, b in zip(x_lin, r_lin)]
        knn = knn_two_sample(
            recon.reshape(len(recon), -1), x.reshape(len(x), -1), k=knn_k(2 * len(x))
        )
        report.reconstruction[inst] = {
            "rmse": float(np.mean(per_rmse)),
            "lsd": float(np.mean(per_lsd)),
            "mmd": mmd(recon.reshape(len(recon), -1), x.reshape(len(x), -1), EVAL_BANK),
            "knn_accuracy": knn.accuracy,
            "knn_raw": knn.raw_score,
        }

    for src in sorted(test_chunks):
        for tgt in sorted(test_chunks):
            if src == tgt:
                continue
            req = TransferRequest(src, tgt)
            moved = map_chunks(
                model, test_chunks[src], test_labels[src],
                transfer_labels(test_labels[src], req),
            )
            knn = knn_two_sample(
                moved.reshape(len(moved), -1),
                test_chunks[tgt].reshape(len(test_chunks[tgt]), -1),
                k=knn_k(len(moved) + len(test_chunks[tgt])),
            )
            report.transfer[(src, tgt)] = {
                "mmd": mmd(
                    moved.reshape(len(moved), -1),
                    test_chunks[tgt].reshape(len(test_chunks[tgt]), -1),
                    EVAL_BANK,
                ),
                "knn_accuracy": knn.accuracy,
                "knn_raw": knn.raw_score,
            }
    return report


# --- descriptor distributions --------------------------------------------------

@dataclass
class DescriptorComparison:
    """Histograms (densities over shared edges) and Wasserstein distances for
    source reconstructions (a), source->target transfers (b) and target
    reconstructions (c)."""

    histograms: dict[str, dict[str, np.ndarray]]
    bin_edges: dict[str, np.ndarray]
    w_transfer_target: dict[str, float]  # W(b, c)
    w_source_target: dict[str, float]  # W(a, c)


def descriptor_distributions(
    model: MoveModel,
    dataset: DatasetSplit,
    source: int,
    target: int,
    bins: int = 30,
) -> DescriptorComparison:
    by_inst = dataset.test_records_by_instrument()
    if source not in by_inst or target not in by_inst:
        raise EvaluationError("source or target domain has no test notes")
    stats = dataset.stats
    floor = dataset.spectral_config.floor
    _, centers = mel_filterbank(dataset.spectral_config)

    xs, ls, _ = dataset.chunks_of(by_inst[source])
    xt, lt, _ = dataset.chunks_of(by_inst[target])
    recon_src = reconstruct_chunks(model, xs, ls)
    recon_tgt = reconstruct_chunks(model, xt, lt)
    req = TransferRequest(source, target)
    moved = map_chunks(model, xs, ls, transfer_labels(ls, req))

    sets = {
        "source_recon": chunk_descriptor_values(to_linear(recon_src, stats, floor), centers),
        "transferred": chunk_descriptor_values(to_linear(moved, stats, floor), centers),
        "target_recon": chunk_descriptor_values(to_linear(recon_tgt, stats, floor), centers),
    }
    histograms: dict[str, dict[str, np.ndarray]] = {}
    edges: dict[str, np.ndarray] = {}
    w_bc: dict[str, float] = {}
    w_ac: dict[str, float] = {}
    for name in DESCRIPTOR_NAMES:
        pooled = np.concatenate([sets[k][name] for k in sets])
        lo, hi = float(pooled.min()), float(pooled.max())
        if hi <= lo:
            hi = lo + 1.0
        e = np.linspace(lo, hi, bins + 1)
        edges[name] = e
        histograms[name] = {
            k: np.histogram(sets[k][name], bins=e, density=True)[0] for k in sets
        }
        w_bc[name] = float(
            wasserstein_distance(sets["transferred"][name], sets["target_recon"][name])
        )
        w_ac[name] = float(
            wasserstein_distance(sets["source_recon"][name], sets["target_recon"][name])
        )
    return DescriptorComparison(histograms, edges, w_bc, w_ac)


# --- latent topology -----------------------------------------------------------

@dataclass
class TopologyGrid:
    condition: ConditionLabel
    lo: float
    hi: float
    n: int
    points: np.ndarray  # [n^3, 3]
    values: dict[str, np.ndarray]  # descriptor name -> [n^3]


def latent_topology(
    model: MoveModel,
    stats: NormStats,
    bin_centers: np.ndarray,
    floor: float,
    condition: ConditionLabel,
    lo: float = -3.0,
    hi: float = 3.0,
    n: int = 9,
) -> TopologyGrid:
    """Decode a regular n^3 lattice over the latent box under one condition
    and compute mean per-chunk descriptors at every grid point."""
    if model.cfg.latent_dim != 3:
        raise EvaluationError("topology grids require a 3-D latent space")
    if n < 2:
        raise EvaluationError("need n >= 2 grid points per axis")
    if not lo < hi:
        raise EvaluationError("degenerate box: lo must be < hi")
    axis = np.linspace(lo, hi, n)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    dtype = next(model.parameters()).dtype
    labels = [condition] * len(grid)
    with torch.no_grad():
        mu_x, _ = model.decode(
            torch.as_tensor(grid, dtype=dtype), batch_labels(labels, model.cfg)
        )
        decoded = torch.tanh(mu_x).numpy()
    lin = to_linear(decoded, stats, floor)
    values = {name: np.empty(len(grid)) for name in DESCRIPTOR_NAMES}
    for i in range(len(grid)):
        vals = chunk_descriptor_values(lin[i][None], bin_centers)
        for name in DESCRIPTOR_NAMES:
            values[name][i] = float(np.mean(vals[name]))
    if not all(np.isfinite(v).all() for v in values.values()):
        raise EvaluationError("non-finite descriptor on the topology grid")
    return TopologyGrid(condition, lo, hi, n, grid, values)


def topology_neighbor_smoothness(grid: TopologyGrid, name: str = "centroid") -> float:
    """Mean |descriptor difference| between lattice neighbours."""
    v = grid.values[name].reshape(grid.n, grid.n, grid.n)
    diffs = []
    for ax in range(3):
        d = np.abs(np.diff(v, axis=ax))
        diffs.append(d.ravel())
    return float(np.concatenate(diffs).mean())
