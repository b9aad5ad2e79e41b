import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from movae.conditioning import ConditionLabel
from movae.evaluation import (
    DescriptorFrame,
    EvaluationError,
    chunk_descriptor_values,
    descriptor_distributions,
    descriptors,
    evaluate,
    knn_two_sample,
    latent_topology,
    lsd,
    rmse,
    topology_neighbor_smoothness,
)
from movae.model import ModelConfig, ConvSpec

from tests.conftest import make_untrained, small_model_config


class TestRmse:
    def test_zero_for_equal(self):
        x = np.random.default_rng(0).normal(size=(4, 5))
        assert rmse(x, x.copy()) == 0.0

    def test_unit_case(self):
        assert rmse(np.array([1.0, 0.0]), np.array([0.0, 0.0])) == pytest.approx(1.0)

    def test_three_four_five(self):
        assert rmse(np.array([3.0, 4.0]), np.array([0.0, 0.0])) == pytest.approx(5.0)

    def test_shape_mismatch(self):
        with pytest.raises(EvaluationError):
            rmse(np.zeros(3), np.zeros(4))

    @given(
        x=hnp.arrays(np.float64, (3, 4), elements=st.floats(-10, 10)),
        y=hnp.arrays(np.float64, (3, 4), elements=st.floats(-10, 10)),
    )
    @settings(max_examples=50, deadline=None)
    def test_metric_properties(self, x, y):
        assert rmse(x, y) >= 0.0
        assert rmse(x, y) == rmse(y, x)
        if rmse(x, y) == 0.0:
            assert np.array_equal(x, y)


class TestLsd:
    def test_zero_for_equal(self):
        x = np.full((2, 4), 0.3)
        assert lsd(x, x.copy()) == 0.0

    def test_ratio_100_in_four_bins(self):
        x = np.full(4, 1.0)
        y = np.full(4, 0.1)  # x^2/y^2 = 100 -> 20 dB per bin
        assert lsd(x, y) == pytest.approx(np.sqrt(4 * 20.0**2))
        assert lsd(x, y) == pytest.approx(40.0)

    def test_floor_case(self):
        b = 16
        floor = 6e-5
        x = np.full(b, floor * 10)
        y = np.full(b, floor)
        assert lsd(x, y) == pytest.approx(20.0 * np.sqrt(b))

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0.1, 2.0, size=(3, 8))
        y = rng.uniform(0.1, 2.0, size=(3, 8))
        assert lsd(x, y) == pytest.approx(lsd(y, x))


class TestKnn:
    def test_chance_level_same_distribution(self):
        accs = []
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x = rng.normal(size=(200, 3))
            y = rng.normal(size=(200, 3))
            accs.append(knn_two_sample(x, y).accuracy)
        assert 0.4 <= float(np.mean(accs)) <= 0.6

    def test_separated_clusters(self):
        rng = np.random.default_rng(0)
        x = rng.normal(0, 1, size=(200, 3))
        y = rng.normal(100, 1, size=(200, 3))
        res = knn_two_sample(x, y)
        assert res.accuracy > 0.99
        assert res.raw_score == int(res.accuracy * 400 * 10)

    def test_accuracy_bounds_and_permutation_invariance(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(40, 2))
        y = rng.normal(0.5, 1, size=(30, 2))
        a = knn_two_sample(x, y)
        assert 0.0 <= a.accuracy <= 1.0
        perm_x = x[rng.permutation(len(x))]
        perm_y = y[rng.permutation(len(y))]
        b = knn_two_sample(perm_x, perm_y)
        assert a.accuracy == pytest.approx(b.accuracy)

    def test_insufficient_points(self):
        with pytest.raises(EvaluationError):
            knn_two_sample(np.zeros((4, 2)), np.zeros((5, 2)), k=10)


class TestDescriptors:
    centers = np.linspace(100.0, 8000.0, 16)

    def test_flat_frame(self):
        d = descriptors(np.full(16, 0.5), self.centers)
        assert d.flatness == pytest.approx(1.0, abs=1e-12)

    def test_single_bin(self):
        a = np.zeros(16)
        a[7] = 2.0
        d = descriptors(a, self.centers)
        assert d.centroid == pytest.approx(self.centers[7])
        assert d.rolloff == pytest.approx(self.centers[7])
        assert d.flatness == 0.0

    def test_two_equal_bins(self):
        a = np.zeros(16)
        a[2] = a[10] = 1.0
        d = descriptors(a, self.centers)
        assert d.centroid == pytest.approx((self.centers[2] + self.centers[10]) / 2)

    def test_scaling_behavior(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(0.01, 1.0, 16)
        base = descriptors(a, self.centers)
        scaled = descriptors(7.0 * a, self.centers)
        assert scaled.centroid == pytest.approx(base.centroid)
        assert scaled.rolloff == pytest.approx(base.rolloff)
        assert scaled.flatness == pytest.approx(base.flatness)
        assert scaled.loudness - base.loudness == pytest.approx(10 * np.log10(49.0), abs=1e-3)

    def test_degenerate_all_zero(self):
        d = descriptors(np.zeros(16), self.centers)
        assert d.flatness == 0.0 and d.centroid == 0.0 and d.rolloff == 0.0
        assert d.loudness == pytest.approx(10 * np.log10(1e-10))

    def test_flatness_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.uniform(0, 1, 16)
            d = descriptors(a, self.centers)
            assert 0.0 <= d.flatness <= 1.0 + 1e-12


class TestTopology:
    def test_corner_lattice(self, small_model, small_split):
        stats = small_split.stats
        scfg = small_split.spectral_config
        from movae.spectral import mel_filterbank

        _, centers = mel_filterbank(scfg)
        grid = latent_topology(
            small_model, stats, centers, scfg.floor,
            ConditionLabel(0, 3, 0), lo=-2.0, hi=2.0, n=2,
        )
        assert grid.points.shape == (8, 3)
        assert set(map(tuple, np.abs(grid.points))) == {(2.0, 2.0, 2.0)}

    def test_grid_spacing_and_count(self, small_model, small_split):
        from movae.spectral import mel_filterbank

        scfg = small_split.spectral_config
        _, centers = mel_filterbank(scfg)
        grid = latent_topology(
            small_model, small_split.stats, centers, scfg.floor,
            ConditionLabel(4, 4, 1), lo=-3.0, hi=3.0, n=17,
        )
        assert len(grid.points) == 17**3 == 4913
        axis = np.unique(grid.points[:, 0])
        assert np.allclose(np.diff(axis), 0.375)
        for name in ("flatness", "centroid", "rolloff", "loudness"):
            assert np.isfinite(grid.values[name]).all()

    def test_degenerate_box(self, small_model, small_split):
        from movae.spectral import mel_filterbank

        scfg = small_split.spectral_config
        _, centers = mel_filterbank(scfg)
        with pytest.raises(EvaluationError):
            latent_topology(
                small_model, small_split.stats, centers, scfg.floor,
                ConditionLabel(0, 3, 0), lo=1.0, hi=1.0, n=3,
            )

    def test_latent_dim_requirement(self, small_split):
        cfg = small_model_config(latent_dim=2)
        model = make_untrained(cfg)
        from movae.spectral import mel_filterbank

        scfg = small_split.spectral_config
        _, centers = mel_filterbank(scfg)
        with pytest.raises(EvaluationError):
            latent_topology(
                model, small_split.stats, centers, scfg.floor,
                ConditionLabel(0, 3, 0), n=3,
            )


class TestEvaluate:
    def test_report_shape_and_determinism(self, small_model, small_split):
        rep1 = evaluate(small_model, small_split)
        rep2 = evaluate(small_model, small_split)
        assert set(rep1.reconstruction) == {0, 1}
        assert set(rep1.transfer) == {(0, 1), (1, 0)}
        assert rep1.reconstruction == rep2.reconstruction
        assert rep1.transfer == rep2.transfer
        for metrics in rep1.reconstruction.values():
            assert metrics["mmd"] >= 0.0
            assert all(np.isfinite(v) for v in metrics.values())
        text = rep1.to_text()
        assert "reconstructions" in text and "bright->mellow" in text

    def test_untrained_model_still_reports(self, small_split, small_mcfg):
        rep = evaluate(make_untrained(small_mcfg), small_split)
        assert len(rep.reconstruction) == 2


class TestDescriptorDistributions:
    def test_histograms_are_densities(self, small_model, small_split):
        comp = descriptor_distributions(small_model, small_split, 0, 1, bins=20)
        for name, hists in comp.histograms.items():
            widths = np.diff(comp.bin_edges[name])
            for key, h in hists.items():
                assert np.sum(h * widths) == pytest.approx(1.0, abs=1e-9), (name, key)
        assert set(comp.w_transfer_target) == {"flatness", "centroid", "rolloff", "loudness"}

    def test_untrained_runs_without_ordering_guarantee(self, small_split, small_mcfg):
        comp = descriptor_distributions(make_untrained(small_mcfg), small_split, 0, 1)
        assert "centroid" in comp.w_source_target
