"""Waveform container and WAV file I/O (RIFF PCM 16-bit little-endian)."""

from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np

DEFAULT_SAMPLE_RATE = 22050


class WavFormatError(Exception):
    """Raised for unreadable or unsupported WAV files."""


@dataclass
class AudioBuffer:
    """Mono audio with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioBuffer samples must be 1-D")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


def clamp_peak(samples: np.ndarray, peak: float = 1.0) -> np.ndarray:
    """Scale down (never up) so that max |sample| <= peak."""
    m = np.max(np.abs(samples)) if len(samples) else 0.0
    if m > peak:
        return samples * (peak / m)
    return samples


def resample_linear(audio: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Resample by linear interpolation onto the target rate's sample grid."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if audio.sample_rate == target_rate:
        return audio
    n_out = int(round(len(audio.samples) * target_rate / audio.sample_rate))
    src_t = np.arange(len(audio.samples)) / audio.sample_rate
    dst_t = np.arange(n_out) / target_rate
    out = np.interp(dst_t, src_t, audio.samples)
    return AudioBuffer(out, target_rate)


def read_wav(path) -> AudioBuffer:
    """Read a PCM 16-bit WAV file; stereo input keeps the first channel."""
    try:
        with wave.open(str(path), "rb") as w:
            n_channels = w.getnchannels()
            sampwidth = w.getsampwidth()
            rate = w.getframerate()
            n_frames = w.getnframes()
            raw = w.readframes(n_frames)
    except (wave.Error, EOFError, OSError) as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    if sampwidth != 2:
        raise WavFormatError(f"{path}: only 16-bit PCM supported, got {8 * sampwidth}-bit")
    data = np.frombuffer(raw, dtype="<i2")
    if n_channels > 1:
        data = data[::n_channels]
    samples = data.astype(np.float64) / 32768.0
    return AudioBuffer(samples, rate)


def write_wav(path, audio: AudioBuffer) -> None:
    """Write mono PCM 16-bit little-endian WAV."""
    samples = clamp_peak(audio.samples)
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate)
        w.writeframes(pcm.tobytes())


def wav_bytes(audio: AudioBuffer) -> bytes:
    """Serialize to in-memory WAV (PCM 16 LE mono)."""
    import io

    buf = io.BytesIO()
    samples = clamp_peak(audio.samples)
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate)
        w.writeframes(pcm.tobytes())
    return buf.getvalue()


def audio_from_wav_bytes(data: bytes) -> AudioBuffer:
    """Parse an in-memory WAV payload."""
    import io

    try:
        with wave.open(io.BytesIO(data), "rb") as w:
            n_channels = w.getnchannels()
            sampwidth = w.getsampwidth()
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(str(exc)) from exc
    if sampwidth != 2:
        raise WavFormatError(f"only 16-bit PCM supported, got {8 * sampwidth}-bit")
    arr = np.frombuffer(raw, dtype="<i2")
    if n_channels > 1:
        arr = arr[::n_channels]
    return AudioBuffer(arr.astype(np.float64) / 32768.0, rate)
