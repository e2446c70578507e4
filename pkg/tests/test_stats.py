"""Significance machinery tests against brute-force sweep and BH oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ttest_rel

from brainalign import stats
from brainalign.datamodel import AccuracyMap, RoiLabels
from brainalign.errors import ConfigError, DimensionMismatchError, FormatError


def sweep_oracle(values, q):
    """Literal step-by-step sweep: delta = 0.001, 0.002, ... 0.499."""
    for k in range(1, 500):
        delta = k / 1000.0
        low = int(np.count_nonzero(values <= 0.5 - delta))
        high = int(np.count_nonzero(values >= 0.5 + delta))
        fdp = (1 + low) / max(1, high)
        if fdp <= q:
            return delta, values >= 0.5 + delta, True
    return 0.499, np.zeros(values.size, dtype=bool), False


class TestFdpThreshold:
    def test_worked_example(self):
        values = np.concatenate([np.full(1000, 0.95), np.full(10, 0.05)])
        result = stats.fdp_threshold(values, q=0.05)
        # delta = 0.001: (1 + 10) / 1000 = 0.011 <= 0.05
        assert result.delta_final == 0.001
        assert result.n_rejected == 1000
        assert result.threshold_found
        assert result.fdp_trace.shape == (1, 2)
        assert result.fdp_trace[0, 1] == (1 + 10) / 1000

    def test_all_chance_rejects_nothing(self):
        values = np.random.default_rng(0).uniform(0.0, 0.5, size=500)
        result = stats.fdp_threshold(values, q=0.05)
        assert not result.threshold_found
        assert result.n_rejected == 0
        assert result.fdp_trace.shape == (499, 2)

    def test_matches_sweep_oracle_on_random_maps(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n_signal = int(rng.integers(0, 200))
            n_null = int(rng.integers(1, 400))
            values = np.concatenate([
                rng.binomial(1000, 0.5, size=n_null) / 1000.0,
                rng.binomial(1000, rng.uniform(0.6, 0.95), size=n_signal) / 1000.0,
            ])
            result = stats.fdp_threshold(values, q=0.05)
            delta, mask, found = sweep_oracle(values, 0.05)
            assert result.delta_final == delta
            assert result.threshold_found == found
            assert np.array_equal(result.rejected, mask)

    def test_rejections_monotone_under_raising(self):
        rng = np.random.default_rng(2)
        x = np.concatenate([rng.uniform(0.0, 0.5, 300),
                            rng.uniform(0.5, 1.0, 300)])
        y = x.copy()
        above = y >= 0.5
        y[above] = np.minimum(1.0, y[above] + rng.uniform(0, 0.2, above.sum()))
        rx = stats.fdp_threshold(x, q=0.05)
        ry = stats.fdp_threshold(y, q=0.05)
        assert np.all(ry.rejected[rx.rejected])

    def test_empirical_fdr_control(self):
        """Mean realized FDP stays near q over >= 100 simulations."""
        rng = np.random.default_rng(3)
        fdps, powers = [], []
        for _ in range(100):
            n_signal, n_null = 600, 1400
            truth = np.zeros(n_signal + n_null, dtype=bool)
            truth[:n_signal] = True
            values = np.concatenate([
                rng.binomial(1000, 0.8, size=n_signal) / 1000.0,
                rng.binomial(1000, 0.5, size=n_null) / 1000.0,
            ])
            result = stats.fdp_threshold(values, q=0.05)
            n_rej = max(1, result.n_rejected)
            fdps.append(np.count_nonzero(result.rejected & ~truth) / n_rej)
            powers.append(np.count_nonzero(result.rejected & truth) / n_signal)
        assert np.mean(fdps) <= 0.08
        assert np.mean(powers) >= 0.9

    def test_out_of_range_accuracy(self):
        with pytest.raises(FormatError):
            stats.fdp_threshold(np.array([0.5, 1.2]))

    def test_invalid_q(self):
        with pytest.raises(ConfigError):
            stats.fdp_threshold(np.array([0.5]), q=0.0)


class TestSharedAccuracy:
    @staticmethod
    def make_map(values):
        return AccuracyMap(values=np.asarray(values, dtype=np.float64),
                           n_repeats=100)

    def test_identical_features(self):
        m = self.make_map([0.8, 0.8])
        out = stats.shared_accuracy(m, m, m)
        assert np.allclose(out.values, 0.8)

    def test_no_added_information(self):
        a = self.make_map([0.8])
        b = self.make_map([0.5])
        ab = self.make_map([0.8])
        assert np.allclose(stats.shared_accuracy(a, b, ab).values, 0.5)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(4)
        a = self.make_map(rng.uniform(size=50))
        b = self.make_map(rng.uniform(size=50))
        ab = self.make_map(rng.uniform(size=50))
        assert np.array_equal(stats.shared_accuracy(a, b, ab).values,
                              stats.shared_accuracy(b, a, ab).values)

    def test_mismatch_errors(self):
        a = self.make_map([0.5, 0.5])
        b = self.make_map([0.5])
        with pytest.raises(DimensionMismatchError):
            stats.shared_accuracy(a, b, a)
        c = AccuracyMap(values=np.array([0.5, 0.5]), n_repeats=7)
        with pytest.raises(DimensionMismatchError):
            stats.shared_accuracy(a, c, a)


class TestRegionSummary:
    def test_full_region_above_threshold(self):
        rois = RoiLabels(labels=np.array(["1b"] * 10))
        values = np.full(10, 0.9)
        rows = {r.label: r for r in stats.region_summary(values, rois, 0.7)}
        assert rows["1b"].mean == 1.0

    def test_empty_region_missing(self):
        rois = RoiLabels(labels=np.array(["1a"] * 4))
        rows = {r.label: r for r in stats.region_summary(np.zeros(4), rois, 0.7)}
        assert math.isnan(rows["2c"].mean)
        assert rows["2c"].n_voxels == 0

    def test_constructed_fraction(self):
        rois = RoiLabels(labels=np.array(["2a"] * 1000))
        values = np.full(1000, 0.2)
        values[:300] = 0.9
        rows = {r.label: r for r in stats.region_summary(values, rois, 0.7)}
        assert rows["2a"].mean == 0.30

    def test_boolean_mask_input(self):
        rois = RoiLabels(labels=np.array(["1a", "1a", "2b", "2b"]))
        mask = np.array([True, False, True, True])
        rows = {r.label: r for r in stats.region_summary(mask, rois)}
        assert rows["1a"].mean == 0.5
        assert rows["2b"].mean == 1.0

    def test_multiple_subjects(self):
        rois = RoiLabels(labels=np.array(["1a"] * 4))
        maps = [np.array([0.9, 0.9, 0.1, 0.1]), np.array([0.9, 0.1, 0.1, 0.1])]
        rows = {r.label: r for r in stats.region_summary(maps, rois, 0.7)}
        assert rows["1a"].fractions == (0.5, 0.25)
        assert rows["1a"].mean == 0.375
        expected_se = np.std([0.5, 0.25], ddof=1) / np.sqrt(2)
        assert abs(rows["1a"].stderr - expected_se) < 1e-12

    def test_coverage_mismatch(self):
        rois = RoiLabels(labels=np.array(["1a"] * 3))
        with pytest.raises(DimensionMismatchError):
            stats.region_summary(np.zeros(5), rois)

    def test_unknown_label_rejected_at_construction(self):
        with pytest.raises(FormatError):
            RoiLabels(labels=np.array(["volcano"]))


def bh_oracle(p_values, q):
    """Textbook step-up rule, implemented independently."""
    p = list(p_values)
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    k_star = 0
    for rank, idx in enumerate(order, start=1):
        if p[idx] <= rank * q / m:
            k_star = rank
    mask = [False] * m
    for idx in order[:k_star]:
        mask[idx] = True
    return np.array(mask)


class TestPairedTestBh:
    def test_identical_outcomes_not_significant(self):
        outcomes = {"task": np.ones(50)}
        result = stats.paired_test_bh(outcomes, {"task": np.ones(50)})
        assert result[0].p_value == 1.0
        assert math.isnan(result[0].t_stat)
        assert not result[0].significant

    def test_mass_flip_is_significant(self):
        # variant flips 200 of 19440 items from wrong to right
        base = np.zeros(19440)
        base[:10000] = 1.0
        variant = base.copy()
        variant[10000:10200] = 1.0
        result = stats.paired_test_bh({"t": variant}, {"t": base})[0]
        t_scipy, p_scipy = ttest_rel(variant, base)
        assert abs(result.t_stat - t_scipy) < 1e-9
        assert abs(result.p_value - p_scipy) < 1e-12
        assert result.significant

    def test_zero_variance_nonzero_mean(self):
        t, p = stats.paired_outcome_test(np.ones(10), np.zeros(10))
        assert p == 0.0 and t == math.inf

    def test_item_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            stats.paired_test_bh({"t": np.ones(5)}, {"t": np.ones(6)})
        with pytest.raises(ConfigError):
            stats.paired_test_bh({"a": np.ones(5)}, {"b": np.ones(5)})

    def test_bh_textbook_example(self):
        # p(2) = 0.04 > 2/3 * 0.05, so only the smallest p survives
        mask = stats.benjamini_hochberg([0.001, 0.04, 0.2], q=0.05)
        assert list(mask) == [True, False, False]
        assert np.array_equal(mask, bh_oracle([0.001, 0.04, 0.2], 0.05))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1,
                    max_size=40),
           st.floats(min_value=0.01, max_value=0.3))
    def test_bh_matches_oracle(self, p_values, q):
        assert np.array_equal(stats.benjamini_hochberg(p_values, q=q),
                              bh_oracle(p_values, q))

    def test_thirteen_task_layout(self):
        rng = np.random.default_rng(5)
        variant, base = {}, {}
        for k in range(13):
            n = int(rng.integers(100, 2000))
            base[f"task{k}"] = rng.integers(0, 2, size=n).astype(float)
            flip = rng.uniform() < 0.5
            v = base[f"task{k}"].copy()
            if flip:
                idx = rng.choice(n, size=n // 10, replace=False)
                v[idx] = 1.0
            variant[f"task{k}"] = v
        result = stats.paired_test_bh(variant, base)
        assert len(result) == 13
        for comp in result:
            assert comp.mean_variant == variant[comp.task].mean()
