"""Invertible log-frequency magnitude frontend.

Analysis is an STFT (Hann window) followed by a triangular mel filterbank,
flooring and a natural-log transform. Inversion goes back through the
filterbank pseudoinverse and Griffin-Lim phase reconstruction, so the
representation stays iteratively invertible to the signal domain.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .audio import AudioBuffer

MOVESPEC_MAGIC = b"MOVESPEC"
MOVESPEC_VERSION = 1


class FrontendError(Exception):
    pass


@dataclass(frozen=True)
class SpectralConfig:
    # hop of 165 makes a 16-frame chunk span ~120 ms at 22050 Hz
    sample_rate: int = 22050
    n_fft: int = 1024
    hop: int = 165
    n_bins: int = 128
    f_min: float = 10.0
    f_max: float = 11000.0
    floor: float = 6e-5

    def __post_init__(self):
        if self.n_bins < 8:
            raise ValueError("n_bins must be >= 8")
        if not (0 < self.f_min < self.f_max <= self.sample_rate / 2):
            raise ValueError("need 0 < f_min < f_max <= Nyquist")
        if self.floor <= 0:
            raise ValueError("floor must be positive")

    def chunk_duration_s(self, t_chunk: int = 16) -> float:
        """Seconds of temporal context covered by one chunk."""
        return (t_chunk * self.hop) / self.sample_rate


def full_scale_config() -> SpectralConfig:
    """500 bins over 10 Hz - 11 kHz (the full-resolution preset)."""
    return SpectralConfig(n_bins=500)


@dataclass
class LogMagSpectrogram:
    """Log mel magnitudes, frames[t, b] >= log(floor_value)."""

    frames: np.ndarray
    bin_centers: np.ndarray
    hop: int
    floor_value: float
    config: SpectralConfig | None = None

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[1]


@dataclass
class SpectroChunk:
    """Fixed-size tile of a spectrogram; source_id = (note id, frame offset)."""

    data: np.ndarray
    source_id: tuple = ("", 0)


@dataclass(frozen=True)
class NormStats:
    """Zero-mean unit-range map fitted on training data.

    normalize: x' = (x - mean) / (range_max - range_min). Training values
    then have mean 0 and spread exactly one unit, which keeps them inside
    [-1, 1] (the tanh output range of the generator).
    """

    mean: np.ndarray
    range_min: np.ndarray
    range_max: np.ndarray
    per_bin: bool = False

    def __post_init__(self):
        if np.any(np.asarray(self.range_max) <= np.asarray(self.range_min)):
            raise ValueError("degenerate stats: range_max must exceed range_min")

    @property
    def scale(self) -> np.ndarray:
        return np.asarray(self.range_max) - np.asarray(self.range_min)


# --- mel scale -------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: SpectralConfig) -> tuple[np.ndarray, np.ndarray]:
    """Triangular filterbank [n_bins, n_fft//2+1] and band center frequencies."""
    n_freqs = cfg.n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, cfg.sample_rate / 2, n_freqs)
    mel_pts = np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_bins + 2)
    hz_pts = mel_to_hz(mel_pts)

    fb = np.zeros((cfg.n_bins, n_freqs))
    for b in range(cfg.n_bins):
        lo, ctr, hi = hz_pts[b], hz_pts[b + 1], hz_pts[b + 2]
        up = (fft_freqs - lo) / (ctr - lo)
        down = (hi - fft_freqs) / (hi - ctr)
        fb[b] = np.maximum(0.0, np.minimum(up, down))
    return fb, hz_pts[1:-1].copy()


_FB_CACHE: dict[SpectralConfig, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}


def _filterbank_for(cfg: SpectralConfig):
    """Cached (filterbank, centers, pseudoinverse, gram inverse) per config."""
    entry = _FB_CACHE.get(cfg)
    if entry is None:
        fb, centers = mel_filterbank(cfg)
        gram_inv = np.linalg.inv(fb @ fb.T + 1e-10 * np.eye(cfg.n_bins))
        entry = (fb, centers, np.linalg.pinv(fb), gram_inv)
        _FB_CACHE[cfg] = entry
    return entry


def mel_to_linear_magnitude(
    mel: np.ndarray, cfg: SpectralConfig, refine_iterations: int = 40
) -> np.ndarray:
    """Estimate non-negative linear STFT magnitudes whose mel projection
    matches the given band magnitudes: pseudoinverse start, then alternating
    projections between the mel-consistency affine set and the non-negative
    orthant."""
    fb, _, pinv, gram_inv = _filterbank_for(cfg)
    x = np.maximum(mel @ pinv.T, 0.0)
    for _ in range(refine_iterations):
        residual = x @ fb.T - mel
        x = np.maximum(x - residual @ gram_inv.T @ fb, 0.0)
    return x


# --- STFT ------------------------------------------------------------------

def _hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(samples: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Complex STFT [T, n_fft//2+1], no padding: T = (len - n_fft)//hop + 1."""
    if len(samples) < n_fft:
        raise FrontendError(
            f"audio too short: {len(samples)} samples < analysis window {n_fft}"
        )
    n_frames = (len(samples) - n_fft) // hop + 1
    window = _hann(n_fft)
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return np.fft.rfft(samples[idx] * window, axis=1)


def istft(spec: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Least-squares inverse STFT (windowed overlap-add over the window
    energy), the orthogonal projection back onto the signal domain."""
    n_frames = spec.shape[0]
    window = _hann(n_fft)
    length = n_fft + (n_frames - 1) * hop
    acc = np.zeros(length)
    wsum = np.zeros(length)
    frames = np.fft.irfft(spec, n=n_fft, axis=1)
    for t in range(n_frames):
        sl = slice(t * hop, t * hop + n_fft)
        acc[sl] += frames[t] * window
        wsum[sl] += window * window
    # clamp the window-energy denominator: samples under vanishing Hann tails
    # would otherwise be amplified unboundedly
    return acc / np.maximum(wsum, 1e-3 * wsum.max())


def _consistency_error(spec: np.ndarray, target_mag: np.ndarray) -> float:
    """Full-spectrum Frobenius distance between |spec| and the target
    magnitude (interior rfft bins weighted twice)."""
    w = np.full(spec.shape[1], 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    d2 = (np.abs(spec) - target_mag) ** 2 * w
    return float(np.sqrt(d2.sum()))


def griffin_lim(
    target_mag: np.ndarray, n_fft: int, hop: int, iterations: int
) -> tuple[np.ndarray, list[float]]:
    """Phase reconstruction from a linear STFT magnitude [T, n_freqs].

    Starts from the zero-phase signal and alternates magnitude replacement
    with least-squares resynthesis. Returns the waveform and the
    consistency-error trace (length iterations + 1); the trace is
    non-increasing.
    """
    x = istft(target_mag.astype(complex), n_fft, hop)
    errors = []
    spec = stft(x, n_fft, hop)
    errors.append(_consistency_error(spec, target_mag))
    for _ in range(iterations):
        phase = np.angle(spec)
        x = istft(target_mag * np.exp(1j * phase), n_fft, hop)
        spec = stft(x, n_fft, hop)
        errors.append(_consistency_error(spec, target_mag))
    return x, errors


# --- analysis / inversion ----------------------------------------------------

def analyze(audio: AudioBuffer, cfg: SpectralConfig) -> LogMagSpectrogram:
    """STFT magnitude -> mel bands -> floor -> natural log."""
    if len(audio) == 0:
        raise FrontendError("empty audio")
    if audio.sample_rate != cfg.sample_rate:
        raise FrontendError(
            f"sample rate mismatch: audio {audio.sample_rate}, config {cfg.sample_rate}"
        )
    fb, centers, _, _ = _filterbank_for(cfg)
    mag = np.abs(stft(audio.samples, cfg.n_fft, cfg.hop))
    mel = mag @ fb.T
    frames = np.log(np.maximum(mel, cfg.floor))
    return LogMagSpectrogram(frames, centers, cfg.hop, cfg.floor, cfg)


def linear_magnitudes(spec: LogMagSpectrogram) -> np.ndarray:
    """Undo the log transform (entries stay >= floor_value)."""
    return np.exp(spec.frames)


def invert(spec: LogMagSpectrogram, iterations: int) -> AudioBuffer:
    """Waveform estimate: mel pseudoinverse then Griffin-Lim phase recovery."""
    if spec.config is None:
        raise FrontendError("spectrogram carries no analysis config; cannot invert")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    cfg = spec.config
    lin = mel_to_linear_magnitude(linear_magnitudes(spec), cfg)
    x, _ = griffin_lim(lin, cfg.n_fft, cfg.hop, iterations)
    return AudioBuffer(np.clip(x, -1.0, 1.0), cfg.sample_rate)


def chunk(
    spec: LogMagSpectrogram,
    t_chunk: int = 16,
    hop_chunks: int | None = None,
    note_id: str = "",
) -> list[SpectroChunk]:
    """Slice into [t_chunk x B] tiles; default hop = t_chunk (non-overlapping)."""
    if t_chunk < 1:
        raise ValueError("t_chunk must be >= 1")
    hop_chunks = t_chunk if hop_chunks is None else hop_chunks
    if hop_chunks < 1:
        raise ValueError("hop_chunks must be >= 1")
    out = []
    for start in range(0, spec.n_frames - t_chunk + 1, hop_chunks):
        out.append(SpectroChunk(spec.frames[start : start + t_chunk].copy(), (note_id, start)))
    return out


# --- normalization -----------------------------------------------------------

def fit_norm_stats(train_data: np.ndarray, per_bin: bool = False) -> NormStats:
    """Fit the zero-mean unit-range map on training chunks [N, T, B]."""
    arr = np.asarray(train_data, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot fit stats on empty data")
    if per_bin:
        axes = tuple(range(arr.ndim - 1))
        mean = arr.mean(axis=axes)
        lo = arr.min(axis=axes)
        hi = arr.max(axis=axes)
    else:
        mean = np.float64(arr.mean())
        lo = np.float64(arr.min())
        hi = np.float64(arr.max())
    return NormStats(mean=mean, range_min=lo, range_max=hi, per_bin=per_bin)


def normalize_array(data: np.ndarray, stats: NormStats) -> np.ndarray:
    return (np.asarray(data, dtype=np.float64) - stats.mean) / stats.scale


def denormalize_array(data: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(data, dtype=np.float64) * stats.scale + stats.mean


def normalize_chunks(chunks: list[SpectroChunk], stats: NormStats) -> list[SpectroChunk]:
    return [SpectroChunk(normalize_array(c.data, stats), c.source_id) for c in chunks]


def denormalize_chunks(chunks: list[SpectroChunk], stats: NormStats) -> list[SpectroChunk]:
    return [SpectroChunk(denormalize_array(c.data, stats), c.source_id) for c in chunks]


# --- spectrogram dump format -------------------------------------------------

def write_movespec(path, spec: LogMagSpectrogram) -> None:
    """Binary dump: magic, version u32, T u32, B u32, hop u32, floor f64,
    then row-major f32 entries (all little-endian)."""
    header = MOVESPEC_MAGIC + struct.pack(
        "<IIIId", MOVESPEC_VERSION, spec.n_frames, spec.n_bins, spec.hop, spec.floor_value
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(spec.frames.astype("<f4").tobytes())


def read_movespec(path) -> tuple[np.ndarray, int, float]:
    """Read a spectrogram dump; returns (frames, hop, floor_value)."""
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MOVESPEC_MAGIC:
            raise FrontendError(f"bad magic {magic!r}")
        version, t, b, hop, floor = struct.unpack("<IIIId", f.read(24))
        if version != MOVESPEC_VERSION:
            raise FrontendError(f"unsupported spectrogram format version {version}")
        payload = f.read(4 * t * b)
        if len(payload) != 4 * t * b:
            raise FrontendError("truncated spectrogram payload")
    frames = np.frombuffer(payload, dtype="<f4").reshape(t, b).astype(np.float64)
    return frames, hop, floor
