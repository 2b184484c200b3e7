"""Tests for the α schemes, AUC/WARP losses and the sampled rank estimate."""

import numpy as np
import pytest

from core.errors import ConfigError, DataInvariantError
from core.losses import (
    AlphaScheme, LossKind, NegativeSampler, auc_loss_full, big_L, estimate_rank,
    expected_estimated_loss, hinge, margin_rank, sample_violator, trial_distribution,
)


class TestAlphaScheme:
    @pytest.mark.parametrize("scheme", [AlphaScheme.uniform(), AlphaScheme.harmonic(),
                                        AlphaScheme.precision_at_k(1), AlphaScheme.precision_at_k(5)])
    def test_big_L_is_prefix_sum(self, scheme):
        weights = scheme.weights(40)
        for r in range(41):
            assert big_L(r, scheme) == pytest.approx(weights[:r].sum(), abs=1e-12)

    def test_weights_non_increasing(self):
        for scheme in (AlphaScheme.uniform(), AlphaScheme.harmonic(), AlphaScheme.precision_at_k(3)):
            assert np.all(np.diff(scheme.weights(20)) <= 0)

    def test_harmonic_large_rank_is_constant_time_closed_form(self):
        assert big_L(10 ** 6, AlphaScheme.harmonic()) == pytest.approx(14.392726722864, rel=1e-10)

    def test_parse(self):
        assert AlphaScheme.parse("p@3") == AlphaScheme.precision_at_k(3)
        assert AlphaScheme.parse("Harmonic") == AlphaScheme.harmonic()
        assert AlphaScheme.parse("p@1").name == "p@1"
        with pytest.raises(ConfigError):
            AlphaScheme.parse("p@x")
        with pytest.raises(ConfigError):
            AlphaScheme.precision_at_k(0)

    def test_loss_kind_parse(self):
        assert LossKind.parse("AUC") is LossKind.AUC
        with pytest.raises(ConfigError):
            LossKind.parse("hinge")


def test_hinge():
    assert hinge(2.0, 0.5) == 0.0
    assert hinge(1.0, 0.5) == pytest.approx(0.5)


def _double_loop_auc(scores, positives):
    total = 0.0
    for j in positives:
        for k in range(len(scores)):
            if k not in positives:
                total += max(0.0, 1.0 - scores[j] + scores[k])
    return total


def _count_margin_rank(scores, j, positives):
    return sum(1 for k in range(len(scores)) if k not in positives and 1.0 + scores[k] >= scores[j])


def test_auc_and_margin_rank_match_loop_oracles(rng):
    for _ in range(100):
        Y = int(rng.integers(2, 200))
        scores = rng.normal(size=Y) * 2
        n_pos = int(rng.integers(1, Y))
        positives = set(rng.choice(Y, size=n_pos, replace=False).tolist())
        assert auc_loss_full(scores, positives) == pytest.approx(_double_loop_auc(scores, positives), abs=1e-9)
        j = next(iter(positives))
        assert margin_rank(scores, j, positives) == _count_margin_rank(scores, j, positives)


def test_margin_rank_requires_positive():
    with pytest.raises(DataInvariantError):
        margin_rank([0.0, 1.0], 1, {0})


def test_estimate_rank():
    assert estimate_rank(100, 1) == 99
    assert estimate_rank(100, 10) == 9
    assert estimate_rank(100, 99) == 1
    with pytest.raises(DataInvariantError):
        estimate_rank(100, 0)
    with pytest.raises(DataInvariantError):
        estimate_rank(100, 100)


class TestSampling:
    def test_negative_sampler_never_returns_blocked(self, rng):
        for blocked in ({0, 1, 2}, set(range(1, 9))):
            sampler = NegativeSampler(10, blocked)
            draws = {sampler.draw(rng) for _ in range(500)}
            assert not draws & blocked
            assert draws == set(range(10)) - blocked

    def test_no_violator_gives_none_after_cap(self, rng):
        scores = np.array([10.0, -10.0, -10.0, -10.0])
        calls = []

        def score_fn(k):
            calls.append(k)
            return scores[k]

        assert sample_violator(score_fn, [0], 0, 4, rng) is None
        # f_j plus at most Y - 1 negatives
        assert len(calls) <= 4

    def test_violator_is_a_negative(self, rng):
        scores = np.zeros(6)
        sample = sample_violator(lambda k: scores[k], [0, 1], 0, 6, rng)
        assert sample.negative not in (0, 1)
        assert sample.trials == 1
        assert sample.rank_estimate == 5

    def test_excluded_label_shrinks_universe(self, rng):
        scores = np.zeros(5)
        sample = sample_violator(lambda k: scores[k], [1], 1, 5, rng, excluded=[0])
        assert sample.negative != 0
        assert sample.n_labels == 4

    def test_trial_distribution_sums_to_found_probability(self):
        probs = trial_distribution(20, 19, 4)
        assert probs.sum() == pytest.approx(1 - (1 - 4 / 19) ** 19)
        assert np.all(trial_distribution(20, 19, 0) == 0)


def _dp_expected_estimate(Y, n_neg, n_viol):
    """Forward recursion over P(still searching after n draws)."""
    p = n_viol / n_neg
    alive, num, den = 1.0, 0.0, 0.0
    for n in range(1, Y):
        hit = alive * p
        num += hit * ((Y - 1) // n)
        den += hit
        alive -= hit
    return num / den


def test_expected_estimate_matches_dp_oracle():
    for Y, n_viol in ((10, 1), (20, 3), (50, 7), (50, 49)):
        assert expected_estimated_loss(Y, Y - 1, n_viol) == pytest.approx(
            _dp_expected_estimate(Y, Y - 1, n_viol), rel=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize("Y,r", [(20, 2), (50, 5), (50, 20)])
def test_empirical_estimate_matches_exact_expectation(Y, r):
    rng = np.random.default_rng(Y * 100 + r)
    scores = np.full(Y, -5.0)
    scores[:1 + r] = 0.0
    estimates = []
    for _ in range(200000):
        sample = sample_violator(lambda k: scores[k], [0], 0, Y, rng, f_j=0.0)
        if sample is not None:
            estimates.append(sample.rank_estimate)
    exact = expected_estimated_loss(Y, Y - 1, r)
    assert np.mean(estimates) == pytest.approx(exact, rel=0.01)


def test_estimator_is_biased_upwards_for_a_single_violator():
    # the true rank is 1 but a violator found on the first draw gives Y - 1
    assert expected_estimated_loss(50, 49, 1) > 1.0
