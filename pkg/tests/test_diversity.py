import logging
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmscore.diversity import (
    entropy_profile,
    inter_class_diversity,
    intra_class_diversity,
    regularize,
    sample_entropies,
    sample_entropy,
)
from gmscore.errors import ConfigError, EmptyInput, RangeError
from gmscore.ingest import ClassCounts, LabelVector, ProbabilityMatrix
from gmscore.synthbench import entropy_matched_probabilities

from golden import COUNTS, ENTROPY_MEANS, ENTROPY_STDS, PRINTED_D_INTER, UNIFORM_ENTROPY


def mad_oracle(counts):
    """Inter-class diversity written out long-hand."""
    counts = [float(c) for c in counts]
    mu = sum(counts) / len(counts)
    mad = sum(abs(c - mu) for c in counts) / len(counts)
    return 1.0 - mad / mu


class TestInterClassDiversity:
    @pytest.mark.parametrize("model", ["WGAN", "DCGAN", "BiGAN", "CGAN"])
    def test_reference_rows(self, model):
        got = inter_class_diversity(ClassCounts(np.array(COUNTS[model]))).value
        assert got == pytest.approx(PRINTED_D_INTER[model], abs=1e-4)

    def test_bigan_mean(self):
        d = inter_class_diversity(COUNTS["BiGAN"])
        assert d.mean_count == pytest.approx(879.8)

    @pytest.mark.parametrize("model", sorted(COUNTS))
    def test_matches_long_hand(self, model):
        assert inter_class_diversity(COUNTS[model]).value == pytest.approx(mad_oracle(COUNTS[model]), abs=1e-14)

    def test_all_zero(self):
        with pytest.raises(EmptyInput):
            inter_class_diversity(np.zeros(4, dtype=int))

    @settings(max_examples=300, deadline=None)
    @given(st.integers(2, 20), st.integers(1, 5000))
    def test_uniform_is_one(self, K, n):
        assert inter_class_diversity(np.full(K, n)).value == 1.0

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.integers(0, 3000), min_size=2, max_size=15).filter(lambda c: sum(c) > 0))
    def test_one_only_when_uniform(self, counts):
        value = inter_class_diversity(counts).value
        assert (value == 1.0) == (len(set(counts)) == 1)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 20), st.integers(2, 5000), st.integers(0, 19), st.sampled_from([-1, 1]))
    def test_perturbing_uniform_lowers(self, K, n, i, sign):
        counts = np.full(K, n)
        counts[i % K] += sign
        assert inter_class_diversity(counts).value < 1.0

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(1, 3000), min_size=2, max_size=15), st.integers(2, 50))
    def test_scale_invariant(self, counts, k):
        a = inter_class_diversity(counts).value
        b = inter_class_diversity([c * k for c in counts]).value
        assert a == pytest.approx(b, abs=1e-12)

    @pytest.mark.parametrize("K", [2, 5, 10, 20])
    def test_single_populated_class(self, K, caplog):
        # concentrated counts push MAD past the mean: 1 - 2 (K - 1) / K
        counts = np.zeros(K, dtype=int)
        counts[0] = 100
        with caplog.at_level(logging.WARNING):
            d = inter_class_diversity(counts)
        assert d.value == pytest.approx(1.0 - 2.0 * (K - 1) / K)
        if K > 2:
            assert d.value < 0 and d.mad > d.mean_count
        assert any("<= 0" in r.message for r in caplog.records)

    def test_positive_counts_can_exceed_the_mean(self):
        d = inter_class_diversity([1000] + [1] * 9)
        assert d.mad > d.mean_count
        assert d.value < 0


class TestSampleEntropy:
    def test_one_hot(self):
        assert sample_entropy(np.eye(10)[3]) == 0.0

    @pytest.mark.parametrize("n", sorted(UNIFORM_ENTROPY))
    def test_uniform(self, n):
        assert sample_entropy(np.full(n, 1.0 / n)) == pytest.approx(UNIFORM_ENTROPY[n], abs=1e-3)

    def test_two_way_split(self):
        row = np.zeros(10)
        row[:2] = 0.5
        assert sample_entropy(row) == pytest.approx(-2 * 0.5 * np.log(0.5), abs=1e-6)

    def test_floor_applies_inside_log(self):
        row = np.array([1.0 - 1e-9, 1e-9])
        expected = -(1.0 - 1e-9) * np.log(1.0 - 1e-9) - 1e-9 * np.log(1e-6)
        assert sample_entropy(row) == pytest.approx(expected, rel=1e-12)

    def test_negative_entry(self):
        with pytest.raises(RangeError):
            sample_entropy(np.array([1.1, -0.1]))

    def test_vectorised_matches_scalar(self, rng):
        rows = rng.dirichlet(np.full(6, 0.3), size=50)
        pm = ProbabilityMatrix(rows)
        np.testing.assert_allclose(sample_entropies(pm), [sample_entropy(r) for r in rows], rtol=1e-14)

    @settings(max_examples=300, deadline=None)
    @given(st.integers(2, 30), st.integers(0, 2**31 - 1))
    def test_bounded_by_uniform(self, K, seed):
        g = np.random.default_rng(seed)
        row = g.dirichlet(np.full(K, g.uniform(0.05, 5.0)))
        h = sample_entropy(row)
        assert 0.0 <= h <= np.log(K) + 1e-12
        # random perturbations of the uniform row never beat it
        for _ in range(5):
            p = np.full(K, 1.0 / K) + g.normal(0, 0.01, K)
            p = np.abs(p) / np.abs(p).sum()
            assert sample_entropy(p) <= sample_entropy(np.full(K, 1.0 / K)) + 1e-12


class TestEntropyProfile:
    def test_one_hot_three_classes(self):
        y = np.array([0, 0, 1, 1, 2, 2])
        pm = ProbabilityMatrix(np.eye(3)[y])
        prof = entropy_profile(pm, LabelVector(y, 3), 0.2)
        np.testing.assert_array_equal(prof.per_class_mean, 0.0)
        np.testing.assert_array_equal(prof.per_class_std, 0.0)
        assert prof.collapse_flags.all()

    def test_identical_rows_flag(self):
        row = np.zeros(10)
        row[:2] = [0.6, 0.4]
        rng = np.random.default_rng(1)
        others = rng.dirichlet(np.ones(10) * 0.5, size=30)
        rows = np.vstack([np.tile(row, (30, 1)), others])
        y = np.array([0] * 30 + [1] * 30)
        prof = entropy_profile(ProbabilityMatrix(rows), LabelVector(y, 10), 0.2)
        assert prof.per_class_std[0] == 0.0
        assert prof.collapse_flags[0]

    def test_population_std(self, rng):
        rows = rng.dirichlet(np.ones(4), size=9)
        y = np.zeros(9, dtype=int)
        prof = entropy_profile(ProbabilityMatrix(rows), LabelVector(y, 4), 0.2)
        h = [sample_entropy(r) for r in rows]
        assert prof.per_class_std[0] == pytest.approx(np.std(h, ddof=0), rel=1e-12)

    def test_matched_to_reference_column(self):
        probs, labels = entropy_matched_probabilities(ENTROPY_MEANS["WGAN"], ENTROPY_STDS["WGAN"], 200)
        prof = entropy_profile(probs, labels, 0.2)
        assert prof.overall_mean == pytest.approx(np.mean(ENTROPY_MEANS["WGAN"]), abs=1e-9)
        assert prof.overall_mean == pytest.approx(0.751, abs=0.01)
        np.testing.assert_allclose(prof.per_class_std, ENTROPY_STDS["WGAN"], atol=0.05)
        assert not prof.collapse_flags.any()

    def test_empty_class_excluded_and_warned(self):
        rows = np.array([[0.5, 0.5, 0.0], [0.9, 0.1, 0.0], [0.2, 0.8, 0.0]])
        y = np.array([0, 0, 1])
        prof = entropy_profile(ProbabilityMatrix(rows), LabelVector(y, 3), 0.2)
        assert prof.per_class_count.tolist() == [2, 1, 0]
        assert prof.overall_mean == pytest.approx(np.nanmean(prof.per_class_mean[:2]))
        assert any("class 2" in w for w in prof.warnings)
        # a single-sample class is not called collapsed
        assert not prof.collapse_flags[1] and prof.insufficient[1]

    def test_overall_mean_is_mean_of_classes(self, rng):
        rows = rng.dirichlet(np.ones(5), size=40)
        y = rng.integers(0, 5, size=40)
        prof = entropy_profile(ProbabilityMatrix(rows), LabelVector(y, 5), 0.2)
        pop = prof.per_class_count > 0
        assert prof.overall_mean == pytest.approx(prof.per_class_mean[pop].mean())
        assert np.all(prof.per_class_mean[pop] >= 0)

    def test_linear_runtime(self):
        rng = np.random.default_rng(0)
        K, N = 10, 400_000
        rows = rng.dirichlet(np.ones(K), size=2 * N)
        y = rng.integers(0, K, size=2 * N)
        small = (ProbabilityMatrix(rows[:N]), LabelVector(y[:N], K))
        big = (ProbabilityMatrix(rows), LabelVector(y, K))

        def best(args):
            times = []
            for _ in range(5):
                t0 = time.perf_counter()
                entropy_profile(*args, 0.2)
                times.append(time.perf_counter() - t0)
            return min(times)

        assert best(big) / best(small) <= 2.5


class TestIntraClassDiversity:
    def test_regularized_above_beta(self):
        r = intra_class_diversity(0.751, 0.5)
        assert r.regularized == pytest.approx(0.249) and r.was_regularized

    def test_below_beta_untouched(self):
        r = intra_class_diversity(0.30, 0.5)
        assert r.regularized == 0.30 and not r.was_regularized

    def test_negative_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            r = intra_class_diversity(1.10, 0.5)
        assert r.regularized == pytest.approx(-0.10)
        assert r.warnings and caplog.records

    def test_low_entropy_column(self):
        r = intra_class_diversity(float(np.mean(ENTROPY_MEANS["CGAN"])), 0.5)
        assert r.raw == pytest.approx(0.144) and r.regularized == pytest.approx(0.144)

    def test_bad_beta(self):
        with pytest.raises(ConfigError):
            intra_class_diversity(0.3, 0.0)

    def test_collapsed_classes_contribute_zero(self):
        rng = np.random.default_rng(3)
        spread = np.vstack([np.eye(4)[rng.integers(0, 4, size=10)], np.full((10, 4), 0.25)])
        frozen = np.tile([0.4, 0.3, 0.2, 0.1], (20, 1))
        rows = np.vstack([spread, frozen])
        y = np.array([0] * 20 + [1] * 20)
        prof = entropy_profile(ProbabilityMatrix(rows), LabelVector(y, 4), 0.2)
        r = intra_class_diversity(prof, 0.5)
        assert not prof.collapse_flags[0] and prof.collapse_flags[1]
        assert prof.per_class_mean[1] > 0
        assert r.raw == pytest.approx(prof.per_class_mean[0] / 2)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.05, 2.0))
    def test_idempotent(self, raw, beta):
        x = raw * 2 * beta
        once = regularize(x, beta)
        assert regularize(once, beta) == pytest.approx(once, abs=1e-12)
