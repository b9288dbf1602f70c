import numpy as np
import pytest

from gmscore.diversity import entropy_profile, inter_class_diversity, intra_class_diversity, sample_entropies
from gmscore.errors import ConfigError
from gmscore.ingest import ProbabilityMatrix
from gmscore.synthbench import (
    SynthSpec,
    entropy_matched_probabilities,
    parse_profile,
    row_with_entropy,
    synth_counts,
    synth_probabilities,
)


class TestSpec:
    def test_parse(self):
        assert parse_profile("skewed(0.5)") == ("skewed", 0.5)
        assert parse_profile("uniform") == ("uniform", None)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"K": 1},
            {"sharpness": "temperature(0)"},
            {"sharpness": "temperature(-1)"},
            {"bias_profile": "skewed(-0.5)"},
            {"bias_profile": "zipf(1)"},
            {"collapse_classes": {10}},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            SynthSpec(**kwargs)


class TestCounts:
    def test_uniform(self):
        c = synth_counts(SynthSpec(K=10, samples_per_class=1000))
        assert c.counts.tolist() == [1000] * 10
        assert inter_class_diversity(c).value == 1.0

    def test_skewed(self):
        c = synth_counts(SynthSpec(K=4, samples_per_class=800, bias_profile="skewed(0.5)"))
        assert c.counts.tolist() == [800, 400, 200, 100]
        d = inter_class_diversity(c)
        assert d.mean_count == 375 and d.mad == 225
        assert d.value == pytest.approx(0.4)

    @pytest.mark.parametrize("K", [2, 3, 10, 25])
    def test_single_class(self, K):
        c = synth_counts(SynthSpec(K=K, bias_profile="single_class"))
        assert inter_class_diversity(c).value == pytest.approx(1.0 - 2.0 * (K - 1) / K)
        # no vector with the same total scores lower
        g = np.random.default_rng(K)
        for _ in range(200):
            other = g.multinomial(c.total, g.dirichlet(np.full(K, 0.2)))
            if other.sum():
                assert inter_class_diversity(other).value >= inter_class_diversity(c).value - 1e-12


class TestProbabilities:
    def test_one_hot(self):
        probs, labels = synth_probabilities(SynthSpec(sharpness="one_hot", samples_per_class=20))
        assert np.all(sample_entropies(probs) == 0)
        assert intra_class_diversity(entropy_profile(probs, labels, 0.2)).regularized == 0.0

    def test_uniform(self):
        probs, _ = synth_probabilities(SynthSpec(sharpness="uniform", samples_per_class=5))
        np.testing.assert_allclose(sample_entropies(probs), 2.3025, atol=1e-3)

    def test_collapse_class(self):
        probs, labels = synth_probabilities(SynthSpec(collapse_classes={2}, samples_per_class=50))
        prof = entropy_profile(probs, labels, 0.2)
        assert prof.per_class_std[2] == 0.0
        assert prof.collapse_flags[2]
        assert prof.collapse_flags.sum() == 1

    def test_monotone_in_temperature(self):
        means = []
        for tau in (0.1, 0.5, 1, 2, 5):
            probs, _ = synth_probabilities(SynthSpec(sharpness=f"temperature({tau})", samples_per_class=100))
            means.append(sample_entropies(probs).mean())
        assert np.all(np.diff(means) > 0)

    @pytest.mark.parametrize("sharpness", ["one_hot", "uniform", "temperature(0.1)", "temperature(5)"])
    @pytest.mark.parametrize("profile", ["uniform", "skewed(0.7)", "single_class"])
    def test_valid_matrices(self, sharpness, profile):
        spec = SynthSpec(K=6, samples_per_class=30, bias_profile=profile, sharpness=sharpness)
        probs, labels = synth_probabilities(spec)
        ProbabilityMatrix(probs.rows)  # re-validates
        labels.check_pairs(len(probs))
        assert np.bincount(labels.labels, minlength=6).tolist() == synth_counts(spec).counts.tolist()

    def test_seeded(self):
        a, _ = synth_probabilities(SynthSpec(seed=5, samples_per_class=10))
        b, _ = synth_probabilities(SynthSpec(seed=5, samples_per_class=10))
        c, _ = synth_probabilities(SynthSpec(seed=6, samples_per_class=10))
        np.testing.assert_array_equal(a.rows, b.rows)
        assert not np.array_equal(a.rows, c.rows)


class TestEntropyMatched:
    @pytest.mark.parametrize("target", [0.0, 0.3, 1.0, 2.0, np.log(10)])
    def test_row_with_entropy(self, target):
        row = row_with_entropy(target, 10, 4)
        assert sample_entropies(ProbabilityMatrix(row[None]))[0] == pytest.approx(target, abs=1e-9)
        assert np.argmax(row) == 4 or target == pytest.approx(np.log(10))

    def test_means_exact(self):
        means = [0.2, 0.5, 0.1]
        stds = [0.4, 0.5, 0.3]
        probs, labels = entropy_matched_probabilities(means, stds, 100)
        prof = entropy_profile(probs, labels, 0.2)
        np.testing.assert_allclose(prof.per_class_mean, means, atol=1e-9)
        np.testing.assert_allclose(prof.per_class_std, stds, atol=0.03)
