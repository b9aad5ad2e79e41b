"""Labeled instrument-note data: a deterministic additive-synthesis tone
generator standing in for a recorded note library, generic WAV ingestion with
filename-encoded labels, dataset assembly and the 90/10 note-level split."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, DEFAULT_SAMPLE_RATE, WavFormatError, read_wav, resample_linear, write_wav
from .conditioning import ConditionError, ConditionLabel
from .spectral import (
    NormStats,
    SpectralConfig,
    SpectroChunk,
    analyze,
    chunk,
    fit_norm_stats,
    normalize_chunks,
)

VIBRATO_RATE_HZ = 5.5
MAX_HARMONICS = 64


class CorpusError(Exception):
    pass


@dataclass(frozen=True)
class InstrumentSpec:
    """Parameters of one synthetic instrument domain."""

    id: int
    name: str
    harmonic_decay: float  # per-harmonic amplitude exponent, a_h ~ h^-decay
    odd_even_balance: float = 0.5  # 1.0 -> odd harmonics only
    attack_ms: float = 10.0
    release_ms: float = 80.0
    vibrato_depth: float = 5.0  # cents
    noise_floor: float = 0.002  # relative noise level

    def __post_init__(self):
        if self.harmonic_decay <= 0:
            raise ValueError("harmonic_decay must be positive")
        if not 0.0 <= self.odd_even_balance <= 1.0:
            raise ValueError("odd_even_balance must lie in [0, 1]")
        if self.attack_ms < 0 or self.release_ms < 0:
            raise ValueError("envelope times must be >= 0")


def default_instruments(k: int) -> list[InstrumentSpec]:
    """Canned instrument set chosen to differ in centroid and flatness."""
    bank = [
        InstrumentSpec(0, "bright", harmonic_decay=0.6, odd_even_balance=0.5,
                       attack_ms=8, release_ms=60, vibrato_depth=6, noise_floor=0.002),
        InstrumentSpec(1, "mellow", harmonic_decay=2.2, odd_even_balance=0.5,
                       attack_ms=35, release_ms=120, vibrato_depth=4, noise_floor=0.001),
        InstrumentSpec(2, "reedy", harmonic_decay=1.1, odd_even_balance=0.88,
                       attack_ms=20, release_ms=80, vibrato_depth=5, noise_floor=0.002),
        InstrumentSpec(3, "airy", harmonic_decay=1.5, odd_even_balance=0.45,
                       attack_ms=50, release_ms=150, vibrato_depth=10, noise_floor=0.02),
    ]
    if not 1 <= k <= len(bank):
        raise CorpusError(f"have {len(bank)} canned instruments, asked for {k}")
    return bank[:k]


def midi_number(pitch_class: int, octave: int) -> int:
    return 12 * (octave + 1) + pitch_class


def fundamental_hz(pitch_class: int, octave: int) -> float:
    """Equal temperament, A4 (pc 9, octave 4) = 440 Hz."""
    return 440.0 * 2.0 ** ((midi_number(pitch_class, octave) - 69) / 12.0)


def synthesize_tone(
    spec: InstrumentSpec,
    pitch_class: int,
    octave: int,
    velocity: int,
    duration_s: float = 1.2,
    seed: int = 0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> AudioBuffer:
    """Additive harmonic tone, ADSR-shaped, deterministic per seed.

    Harmonic amplitudes follow h^-(decay - 0.15*velocity) weighted by the
    odd/even balance; harmonics at or above Nyquist are truncated. Velocity
    also scales the overall level.
    """
    label = ConditionLabel(pitch_class, octave)  # validates ranges
    if velocity not in (0, 1, 2):
        raise CorpusError(f"velocity {velocity} out of range 0..2")
    f0 = fundamental_hz(label.pitch_class, label.octave)
    nyquist = sample_rate / 2.0
    if f0 >= nyquist:
        raise CorpusError(f"fundamental {f0:.1f} Hz at or above Nyquist {nyquist:.1f} Hz")

    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate

    # vibrato as instantaneous-frequency modulation around f0
    cents = spec.vibrato_depth * np.sin(2.0 * np.pi * VIBRATO_RATE_HZ * t)
    inst_freq = f0 * 2.0 ** (cents / 1200.0)
    phase0 = np.cumsum(2.0 * np.pi * inst_freq / sample_rate)

    decay = max(spec.harmonic_decay - 0.15 * velocity, 0.05)
    n_harm = min(MAX_HARMONICS, int(nyquist / f0 - 1e-9))
    if n_harm < 1:
        raise CorpusError("no harmonic fits below Nyquist")
    x = np.zeros(n)
    for h in range(1, n_harm + 1):
        w = spec.odd_even_balance if h % 2 == 1 else 1.0 - spec.odd_even_balance
        amp = h ** (-decay) * 2.0 * w
        if amp == 0.0:
            continue
        x += amp * np.sin(h * phase0 + rng.uniform(0.0, 2.0 * np.pi))
    x += spec.noise_floor * rng.standard_normal(n)

    env = np.ones(n)
    attack = min(int(spec.attack_ms * sample_rate / 1000.0), n)
    if attack > 0:
        env[:attack] = np.linspace(0.0, 1.0, attack, endpoint=False)
    release = min(int(spec.release_ms * sample_rate / 1000.0), n)
    if release > 0:
        env[n - release:] *= np.linspace(1.0, 0.0, release)
    x *= env

    level = 0.45 + 0.225 * velocity
    peak = np.max(np.abs(x))
    if peak > 0:
        x *= level / peak
    return AudioBuffer(x, sample_rate)


@dataclass
class NoteRecord:
    """One note: label, velocity, waveform and (after the frontend pass)
    normalized chunks sharing the model's tile shape."""

    label: ConditionLabel
    velocity: int
    audio: AudioBuffer
    instrument_name: str = ""
    note_id: str = ""
    chunks: list[SpectroChunk] = field(default_factory=list)


@dataclass
class DatasetSplit:
    train: list[NoteRecord]
    test: list[NoteRecord]
    stats: NormStats
    seed: int
    instrument_names: list[str] = field(default_factory=list)
    spectral_config: SpectralConfig | None = None
    t_chunk: int = 16
    skipped_notes: int = 0

    @property
    def num_instruments(self) -> int:
        return len(self.instrument_names)

    def chunks_of(self, records: list[NoteRecord]) -> tuple[np.ndarray, list[ConditionLabel], list[tuple]]:
        """Stack chunk tensors [N, T, B] with per-chunk labels and provenance."""
        data, labels, sources = [], [], []
        for rec in records:
            for ch in rec.chunks:
                data.append(ch.data)
                labels.append(rec.label)
                sources.append(ch.source_id)
        if not data:
            return np.zeros((0, self.t_chunk, 1)), [], []
        return np.stack(data), labels, sources

    def train_chunks_by_instrument(self) -> dict[int, np.ndarray]:
        out: dict[int, list[np.ndarray]] = {}
        for rec in self.train:
            out.setdefault(rec.label.instrument, []).extend(c.data for c in rec.chunks)
        return {k: np.stack(v) for k, v in sorted(out.items())}

    def test_records_by_instrument(self) -> dict[int, list[NoteRecord]]:
        out: dict[int, list[NoteRecord]] = {}
        for rec in self.test:
            out.setdefault(rec.label.instrument, []).append(rec)
        return dict(sorted(out.items()))


def synthesize_records(
    specs: list[InstrumentSpec],
    pitch_classes=range(12),
    octaves=(3, 4),
    velocities=(0, 1, 2),
    duration_s: float = 1.2,
    tone_seed: int = 1000,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> tuple[list[NoteRecord], int]:
    """Synthesize the full grid of notes; returns (records, skipped count)."""
    records = []
    skipped = 0
    for spec in specs:
        for pc in pitch_classes:
            for octave in octaves:
                for vel in velocities:
                    seed = tone_seed + ((spec.id * 12 + pc) * 9 + octave) * 3 + vel
                    try:
                        audio = synthesize_tone(
                            spec, pc, octave, vel, duration_s, seed, sample_rate
                        )
                    except CorpusError:
                        skipped += 1
                        continue
                    records.append(
                        NoteRecord(
                            label=ConditionLabel(pc, octave, spec.id),
                            velocity=vel,
                            audio=audio,
                            instrument_name=spec.name,
                            note_id=f"{spec.name}_{pc:02d}_{octave}_{vel}",
                        )
                    )
    return records, skipped


def assemble_split(
    records: list[NoteRecord],
    instrument_names: list[str],
    frontend_cfg: SpectralConfig,
    split_seed: int,
    t_chunk: int = 16,
    test_fraction: float = 0.1,
    per_bin_norm: bool = False,
    skipped: int = 0,
) -> DatasetSplit:
    """Analyze, chunk, split by note (stratified per instrument) and
    normalize with statistics fitted on the training chunks only."""
    if not records:
        raise CorpusError("no note records to assemble")
    for rec in records:
        spec = analyze(rec.audio, frontend_cfg)
        rec.chunks = chunk(spec, t_chunk, note_id=rec.note_id)

    rng = np.random.default_rng(split_seed)
    train: list[NoteRecord] = []
    test: list[NoteRecord] = []
    by_inst: dict[int, list[NoteRecord]] = {}
    for rec in records:
        by_inst.setdefault(rec.label.instrument, []).append(rec)
    for inst in sorted(by_inst):
        group = by_inst[inst]
        order = rng.permutation(len(group))
        n_test = max(1, int(round(test_fraction * len(group))))
        test_idx = set(order[:n_test].tolist())
        for i, rec in enumerate(group):
            (test if i in test_idx else train).append(rec)

    train_data = [c.data for rec in train for c in rec.chunks]
    if not train_data:
        raise CorpusError("training split has no chunks (notes too short?)")
    stats = fit_norm_stats(np.stack(train_data), per_bin=per_bin_norm)
    for rec in train + test:
        rec.chunks = normalize_chunks(rec.chunks, stats)

    return DatasetSplit(
        train=train,
        test=test,
        stats=stats,
        seed=split_seed,
        instrument_names=list(instrument_names),
        spectral_config=frontend_cfg,
        t_chunk=t_chunk,
        skipped_notes=skipped,
    )


def build_corpus(
    specs: list[InstrumentSpec],
    frontend_cfg: SpectralConfig,
    split_seed: int,
    pitch_classes=range(12),
    octaves=(3, 4),
    velocities=(0, 1, 2),
    duration_s: float = 1.2,
    t_chunk: int = 16,
    test_fraction: float = 0.1,
    per_bin_norm: bool = False,
    tone_seed: int = 1000,
) -> DatasetSplit:
    """Synthetic corpus: the full note grid per instrument, assembled and split."""
    if not specs:
        raise CorpusError("need at least one instrument spec")
    records, skipped = synthesize_records(
        specs, pitch_classes, octaves, velocities, duration_s, tone_seed,
        frontend_cfg.sample_rate,
    )
    names = [s.name for s in specs]
    return assemble_split(
        records, names, frontend_cfg, split_seed, t_chunk, test_fraction,
        per_bin_norm, skipped,
    )


# --- WAV ingestion -------------------------------------------------------------

NOTE_FILENAME_RE = re.compile(
    r"^(?P<instrument>.+)_(?P<pc>\d{1,2})_(?P<octave>\d)_(?P<velocity>\d)\.wav$"
)


def parse_note_filename(name: str) -> tuple[str, int, int, int]:
    m = NOTE_FILENAME_RE.match(name)
    if not m:
        raise CorpusError(
            f"filename {name!r} does not match <instrument>_<pitchclass>_<octave>_<velocity>.wav"
        )
    return (
        m.group("instrument"),
        int(m.group("pc")),
        int(m.group("octave")),
        int(m.group("velocity")),
    )


def ingest_wav_dir(
    directory, sample_rate: int = DEFAULT_SAMPLE_RATE
) -> tuple[list[NoteRecord], list[str], list[tuple[str, str]]]:
    """Read every *.wav with a parseable name; bad files become error entries
    and the batch continues. Returns (records, instrument_names, errors)."""
    directory = Path(directory)
    records: list[NoteRecord] = []
    errors: list[tuple[str, str]] = []
    parsed = []
    for path in sorted(directory.glob("*.wav")):
        try:
            inst_name, pc, octave, vel = parse_note_filename(path.name)
            audio = read_wav(path)
            if audio.sample_rate != sample_rate:
                audio = resample_linear(audio, sample_rate)
            if vel not in (0, 1, 2):
                raise CorpusError(f"velocity {vel} out of range 0..2")
            label_probe = ConditionLabel(pc, octave)  # validates ranges
            parsed.append((inst_name, label_probe, vel, audio, path.name))
        except (CorpusError, WavFormatError, ConditionError, ValueError) as exc:
            errors.append((path.name, str(exc)))
    names = sorted({p[0] for p in parsed})
    ids = {name: i for i, name in enumerate(names)}
    for inst_name, probe, vel, audio, fname in parsed:
        records.append(
            NoteRecord(
                label=ConditionLabel(probe.pitch_class, probe.octave, ids[inst_name]),
                velocity=vel,
                audio=audio,
                instrument_name=inst_name,
                note_id=fname.removesuffix(".wav"),
            )
        )
    return records, names, errors


def write_corpus_wavs(records: list[NoteRecord], out_dir) -> Path:
    """Write WAVs plus a manifest (one line per note: path, instrument,
    pitch class, octave, velocity)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.tsv"
    with open(manifest, "w") as f:
        for rec in records:
            fname = f"{rec.instrument_name}_{rec.label.pitch_class:02d}_{rec.label.octave}_{rec.velocity}.wav"
            write_wav(out_dir / fname, rec.audio)
            f.write(
                f"{fname}\t{rec.instrument_name}\t{rec.label.pitch_class}\t"
                f"{rec.label.octave}\t{rec.velocity}\n"
            )
    return manifest
