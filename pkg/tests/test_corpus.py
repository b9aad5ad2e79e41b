import numpy as np
import pytest

from movae.audio import AudioBuffer, read_wav, write_wav
from movae.corpus import (
    CorpusError,
    InstrumentSpec,
    build_corpus,
    default_instruments,
    fundamental_hz,
    ingest_wav_dir,
    parse_note_filename,
    synthesize_tone,
    write_corpus_wavs,
    synthesize_records,
)
from movae.evaluation import chunk_descriptor_values, knn_two_sample
from movae.spectral import SpectralConfig, analyze, linear_magnitudes, mel_filterbank


class TestSynthesizeTone:
    def test_a4_is_440(self):
        assert fundamental_hz(9, 4) == pytest.approx(440.0)

    def test_deterministic(self):
        spec = default_instruments(1)[0]
        a = synthesize_tone(spec, 4, 3, 1, 0.5, seed=99)
        b = synthesize_tone(spec, 4, 3, 1, 0.5, seed=99)
        assert np.array_equal(a.samples, b.samples)
        c = synthesize_tone(spec, 4, 3, 1, 0.5, seed=100)
        assert not np.array_equal(a.samples, c.samples)

    def test_decay_orders_centroid(self):
        cfg = SpectralConfig(n_bins=64)
        bright = InstrumentSpec(0, "a", harmonic_decay=0.5)
        dark = InstrumentSpec(1, "b", harmonic_decay=2.0)
        centroids = {}
        for spec in (bright, dark):
            tone = synthesize_tone(spec, 0, 3, 1, 0.6, seed=1)
            s = analyze(tone, cfg)
            vals = chunk_descriptor_values(linear_magnitudes(s)[None], s.bin_centers)
            centroids[spec.name] = float(np.mean(vals["centroid"]))
        assert centroids["a"] > centroids["b"]

    def test_velocity_range_checked(self):
        spec = default_instruments(1)[0]
        with pytest.raises(CorpusError):
            synthesize_tone(spec, 0, 3, 3, 0.5, seed=0)

    def test_nyquist_rejected(self):
        spec = default_instruments(1)[0]
        with pytest.raises(CorpusError, match="Nyquist"):
            synthesize_tone(spec, 11, 8, 1, 0.5, seed=0, sample_rate=8000)

    def test_amplitude_bounded(self):
        spec = default_instruments(2)[0]
        for vel in (0, 1, 2):
            tone = synthesize_tone(spec, 9, 4, vel, 0.5, seed=2)
            assert np.max(np.abs(tone.samples)) <= 1.0

    def test_invalid_instrument_spec(self):
        with pytest.raises(ValueError):
            InstrumentSpec(0, "bad", harmonic_decay=0.0)
        with pytest.raises(ValueError):
            InstrumentSpec(0, "bad", harmonic_decay=1.0, odd_even_balance=1.5)


class TestBuildCorpus:
    def test_counts_and_split(self, small_split):
        total = len(small_split.train) + len(small_split.test)
        assert total == 2 * 4 * 2 * 3  # instruments x pitches x octaves x velocities
        # ~10% per instrument, stratified
        per_inst_test = {}
        for rec in small_split.test:
            per_inst_test[rec.label.instrument] = per_inst_test.get(rec.label.instrument, 0) + 1
        assert set(per_inst_test) == {0, 1}
        assert all(1 <= n <= 3 for n in per_inst_test.values())

    def test_desk_note_count(self):
        specs = default_instruments(2)
        records, _ = synthesize_records(specs, octaves=(3, 4))
        assert len(records) == 144  # the 100-200 per-domain order of magnitude
        per_domain = len(records) // 2
        assert 50 <= per_domain <= 200

    def test_split_seed_reproducible(self, small_scfg):
        kw = dict(pitch_classes=range(0, 12, 4), octaves=(3,), duration_s=0.7)
        a = build_corpus(default_instruments(2), small_scfg, split_seed=3, **kw)
        b = build_corpus(default_instruments(2), small_scfg, split_seed=3, **kw)
        assert [r.note_id for r in a.test] == [r.note_id for r in b.test]
        c = build_corpus(default_instruments(2), small_scfg, split_seed=4, **kw)
        assert [r.note_id for r in a.test] != [r.note_id for r in c.test]

    def test_train_stats_properties(self, small_split):
        data, _, _ = small_split.chunks_of(small_split.train)
        assert abs(data.mean()) <= 1e-6
        assert data.min() >= -1.0 and data.max() <= 1.0
        assert np.isclose(data.max() - data.min(), 1.0, atol=1e-6)

    def test_no_test_chunk_in_train(self, small_split):
        train_ids = {c.source_id for r in small_split.train for c in r.chunks}
        test_ids = {c.source_id for r in small_split.test for c in r.chunks}
        assert not (train_ids & test_ids)
        train_notes = {r.note_id for r in small_split.train}
        test_notes = {r.note_id for r in small_split.test}
        assert not (train_notes & test_notes)

    def test_domains_distinguishable(self, small_split):
        by = small_split.train_chunks_by_instrument()
        x0 = by[0].reshape(len(by[0]), -1)
        x1 = by[1].reshape(len(by[1]), -1)
        res = knn_two_sample(x0, x1)
        assert res.accuracy > 0.7

    def test_empty_specs_error(self, small_scfg):
        with pytest.raises(CorpusError):
            build_corpus([], small_scfg, split_seed=0)


class TestIngest:
    def test_filename_parsing(self):
        assert parse_note_filename("flute_09_4_1.wav") == ("flute", 9, 4, 1)
        with pytest.raises(CorpusError):
            parse_note_filename("nolabels.wav")

    def test_roundtrip_through_wavs(self, tmp_path, small_scfg):
        specs = default_instruments(2)
        records, _ = synthesize_records(
            specs, pitch_classes=(0, 5), octaves=(4,), velocities=(1,), duration_s=0.5
        )
        write_corpus_wavs(records, tmp_path)
        assert (tmp_path / "manifest.tsv").exists()
        lines = (tmp_path / "manifest.tsv").read_text().strip().split("\n")
        assert len(lines) == len(records)
        got, names, errors = ingest_wav_dir(tmp_path)
        assert errors == []
        assert names == sorted({r.instrument_name for r in records})
        assert len(got) == len(records)
        by_id = {r.note_id: r for r in records}
        for rec in got:
            orig = by_id[rec.note_id]
            assert rec.label.pitch_class == orig.label.pitch_class
            assert rec.label.octave == orig.label.octave
            assert rec.velocity == orig.velocity

    def test_resampling_on_ingest(self, tmp_path):
        t = np.arange(44100) / 44100
        write_wav(tmp_path / "x_00_4_0.wav", AudioBuffer(0.5 * np.sin(2 * np.pi * 440 * t), 44100))
        records, _, errors = ingest_wav_dir(tmp_path)
        assert errors == []
        assert records[0].audio.sample_rate == 22050
        assert abs(len(records[0].audio.samples) - 22050) <= 1

    def test_bad_files_reported_batch_continues(self, tmp_path):
        spec = default_instruments(1)[0]
        write_wav(tmp_path / "good_00_4_0.wav", synthesize_tone(spec, 0, 4, 0, 0.3, seed=1))
        (tmp_path / "trunc_01_4_0.wav").write_bytes(b"RIFF\x10\x00\x00\x00WAVEfmt")
        (tmp_path / "badname.wav").write_bytes(b"not a wav")
        (tmp_path / "range_77_4_0.wav").write_bytes(b"RIFF")
        records, names, errors = ingest_wav_dir(tmp_path)
        assert len(records) == 1 and records[0].note_id == "good_00_4_0"
        failed = {name for name, _ in errors}
        assert failed == {"trunc_01_4_0.wav", "badname.wav", "range_77_4_0.wav"}
        for name, msg in errors:
            assert msg  # every error entry names a reason
