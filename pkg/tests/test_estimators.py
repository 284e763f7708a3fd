import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from entropy_estimation.distributions import (
    Histogram,
    derive_seed,
    draw_histogram,
    sample_dirichlet_symmetric,
    true_entropy,
    zipfian,
)
from entropy_estimation.estimators import (
    EstimatorId,
    EstimatorPreconditionError,
    all_estimators,
    estimate,
    estimate_chao_shen,
    estimate_horvitz_thompson,
    estimate_jackknife,
    estimate_miller_madow,
    estimate_mle,
    estimate_nsb,
    estimate_or_fallback,
    estimate_wolpert_wolf,
    log_evidence,
    nsb_hyperprior_density,
    nsb_prior_entropy,
)
from entropy_estimation.mathfns import integrate

# Frozen reference values, evaluated once in 30-digit arithmetic.
CLOSED_FORM = [
    ("MLE", [3, 1], None, 0.5623351446188083),
    ("MM", [5, 5], None, 0.7431471805599453),
    ("MM", [3, 1], None, 0.6873351446188083),
    ("JACK", [1, 1], None, 1.3862943611198906),
    ("JACK", [2, 2], None, 0.8630462173553428),
    ("HT", [1, 1], None, 0.9241962407465937),
    ("HT", [5, 5], None, 0.6938247437862991),
    ("CS", [1, 1], None, 1.5843364127084464),
    ("WW", [0, 0], 1.0, 0.5),
    ("WW", [3, 1], 1.0, 0.5611111111111111),
]
NSB_REFERENCE = [
    # counts, K, prior-weighted, evidence-weighted
    ([3, 1], 2, 0.5312218207, 0.5634701861),
    ([5, 2, 1, 1], 6, 1.2385947135, 1.3717280372),
    ([10, 3, 1], 20, 1.3899975616, 0.9526666685),
    ([40, 20, 10, 5, 1, 1, 1], 50, 1.7450482342, 1.3665043247),
]
DENSITY_K2_AT_1 = 0.2090956595


@pytest.mark.parametrize("name, counts, alpha, expected", CLOSED_FORM)
def test_closed_form_examples(name, counts, alpha, expected):
    got = estimate(Histogram(counts), EstimatorId(name, alpha)).value
    assert got == pytest.approx(expected, abs=1e-9)


def test_trivial_examples():
    assert estimate_mle(Histogram([5, 5])).value == pytest.approx(math.log(2), abs=1e-15)
    assert estimate_mle(Histogram([10, 0])).value == 0.0
    assert estimate_miller_madow(Histogram([4], 1)).value == 0.0
    assert estimate_jackknife(Histogram([10, 0])).value == pytest.approx(0.0, abs=1e-12)
    assert estimate_horvitz_thompson(Histogram([9])).value == 0.0
    assert estimate_chao_shen(Histogram([2])).value == 0.0
    assert estimate_chao_shen(Histogram([5, 5])).value == pytest.approx(0.6938247437862991, abs=1e-12)
    for alpha in (0.1, 1.0, 7.0):
        assert estimate_wolpert_wolf(Histogram([3], 1), alpha).value == pytest.approx(0.0, abs=1e-12)


def test_density_example_and_normalization():
    assert nsb_hyperprior_density(1.0, 2) == pytest.approx(DENSITY_K2_AT_1, abs=1e-9)
    for K in (2, 10, 100, 1000):
        total = integrate(lambda a: nsb_hyperprior_density(a, K))
        assert total == pytest.approx(1.0, abs=1e-6)


def test_density_is_derivative_of_prior_entropy():
    rng = np.random.default_rng(3)
    for _ in range(50):
        K = int(rng.integers(2, 500))
        a = float(np.exp(rng.uniform(-6, 6)))
        h = 1e-6 * a
        fd = (nsb_prior_entropy(a + h, K) - nsb_prior_entropy(a - h, K)) / (2 * h) / math.log(K)
        assert fd == pytest.approx(nsb_hyperprior_density(a, K), abs=1e-6, rel=1e-6)


def test_density_rejects_small_k():
    with pytest.raises(ValueError):
        nsb_hyperprior_density(1.0, 1)


@pytest.mark.parametrize("counts, K, prior, evidence", NSB_REFERENCE)
def test_nsb_reference_values(counts, K, prior, evidence):
    h = Histogram(counts, K)
    assert estimate_nsb(h, mode="prior").value == pytest.approx(prior, abs=1e-9)
    assert estimate_nsb(h, mode="evidence").value == pytest.approx(evidence, abs=1e-9)


def _ww_closed(counts, alpha):
    a = np.asarray(counts, float) + alpha
    A = a.sum()
    return special.digamma(A + 1) - np.sum(a / A * special.digamma(a + 1))


@pytest.mark.parametrize("mode", ["prior", "evidence"])
def test_nsb_monte_carlo_oracle(mode):
    # Sample alpha from the weight by inverse CDF on a dense log grid and
    # average the WW estimate over the draws.
    counts, K = [3, 1], 2
    h = Histogram(counts, K)
    u = np.linspace(-30, 14, 400_001)
    alpha = np.exp(u)
    density = alpha * (K * special.polygamma(1, K * alpha + 1) - special.polygamma(1, alpha + 1))
    if mode == "evidence":
        logw = (special.gammaln(K * alpha) - K * special.gammaln(alpha)
                + sum(special.gammaln(c + alpha) for c in counts)
                - special.gammaln(sum(counts) + K * alpha))
        density = density * np.exp(logw - logw.max())
    cdf = np.concatenate([[0.0], np.cumsum((density[1:] + density[:-1]) / 2)])
    cdf /= cdf[-1]
    rng = np.random.default_rng(11)
    draws = np.exp(np.interp(rng.random(100_000), cdf, u))
    values = np.array([_ww_closed(counts, a) for a in draws])
    se = values.std(ddof=1) / math.sqrt(values.size)
    got = estimate_nsb(h, mode=mode).value
    assert abs(got - values.mean()) < 3 * se


def test_nsb_within_bounds_on_random_histograms():
    rng = np.random.default_rng(5)
    for i in range(100):
        K = int(rng.integers(2, 300))
        N = int(rng.integers(1, 500))
        h = draw_histogram(sample_dirichlet_symmetric(K, 0.5, derive_seed(5, i)), N, derive_seed(6, i))
        for mode in ("prior", "evidence"):
            v = estimate_nsb(h, mode=mode).value
            assert 0.0 < v < math.log(K)


def test_nsb_consistency_on_uniform():
    from entropy_estimation.distributions import CategoricalDistribution

    h = draw_histogram(CategoricalDistribution(np.full(10, 0.1)), 10**5, 17)
    for mode in ("prior", "evidence"):
        assert abs(estimate_nsb(h, mode=mode).value - math.log(10)) < 0.01


def test_nsb_preconditions():
    with pytest.raises(EstimatorPreconditionError):
        estimate_nsb(Histogram([3], 1))
    with pytest.raises(EstimatorPreconditionError):
        estimate_nsb(Histogram([0, 0]))
    with pytest.raises(ValueError):
        estimate_nsb(Histogram([1, 2]), mode="posterior")


def test_log_evidence_matches_direct_formula():
    h = Histogram([4, 0, 2, 1], 4)
    a = 0.37
    direct = (special.gammaln(4 * a) - 4 * special.gammaln(a)
              + sum(special.gammaln(c + a) for c in [4, 0, 2, 1]) - special.gammaln(7 + 4 * a))
    assert float(log_evidence(h, a)) == pytest.approx(direct, abs=1e-11)


@pytest.mark.parametrize("name", ["MLE", "MM", "JACK", "HT", "CS", "WW", "NSB"])
def test_empty_histogram_rejected(name):
    if name == "WW":
        assert estimate(Histogram([0, 0]), EstimatorId(name)).value == pytest.approx(0.5)
        return
    with pytest.raises(EstimatorPreconditionError):
        estimate(Histogram([0, 0]), EstimatorId(name))


def test_jackknife_needs_two_samples_and_clamp_is_optional():
    with pytest.raises(EstimatorPreconditionError):
        estimate_jackknife(Histogram([1, 0]))
    raw = estimate_jackknife(Histogram([1, 1])).value
    assert raw > math.log(2)
    assert estimate_jackknife(Histogram([1, 1]), clamp=True).value == pytest.approx(math.log(2))


def test_jackknife_grouped_equals_brute_force():
    rng = np.random.default_rng(8)
    for _ in range(30):
        counts = rng.integers(0, 6, size=int(rng.integers(2, 8)))
        if counts.sum() < 2:
            continue
        n = counts.sum()
        held = []
        for k, c in enumerate(counts):
            for _ in range(c):
                cc = counts.copy()
                cc[k] -= 1
                held.append(estimate_mle(Histogram(cc)).value)
        brute = n * estimate_mle(Histogram(counts)).value - (n - 1) / n * sum(held)
        assert estimate_jackknife(Histogram(counts)).value == pytest.approx(brute, abs=1e-10)


def test_fallback_for_single_sample_slice():
    h = Histogram([1, 0, 0])
    with pytest.warns(RuntimeWarning):
        assert estimate_or_fallback(h, EstimatorId("JACK")) == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert estimate_or_fallback(Histogram([2, 1]), EstimatorId("MM")) > 0


def test_wolpert_wolf_validation():
    with pytest.raises(ValueError):
        EstimatorId("WW", 0.0)
    with pytest.raises(ValueError):
        estimate_wolpert_wolf(Histogram([1, 2]), -1.0)


counts_strategy = st.lists(st.integers(0, 40), min_size=2, max_size=12).filter(lambda c: sum(c) >= 2)


@settings(max_examples=100, deadline=None)
@given(counts_strategy)
def test_ht_at_least_mle(counts):
    h = Histogram(counts)
    assert estimate_horvitz_thompson(h).value >= estimate_mle(h).value - 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(2, 40), min_size=1, max_size=12))
def test_cs_equals_ht_without_singletons(counts):
    h = Histogram(counts)
    assert estimate_chao_shen(h).value == pytest.approx(estimate_horvitz_thompson(h).value, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(counts_strategy, st.randoms(use_true_random=False))
def test_label_permutation_invariance(counts, rnd):
    shuffled = list(counts)
    rnd.shuffle(shuffled)
    for e in all_estimators():
        a = estimate(Histogram(counts), e).value
        b = estimate(Histogram(shuffled), e).value
        assert a == pytest.approx(b, abs=1e-10)


def test_ww_strictly_increasing_in_alpha():
    rng = np.random.default_rng(12)
    for _ in range(100):
        K = int(rng.integers(2, 50))
        h = Histogram(rng.integers(0, 20, size=K))
        values = [estimate_wolpert_wolf(h, a).value for a in (0.01, 0.1, 1, 10, 100)]
        assert np.all(np.diff(values) > 0)


def test_ww_large_n_limit():
    d = zipfian(5)
    h = draw_histogram(d, 10**6, 3)
    assert abs(estimate_wolpert_wolf(h, 1.0).value - estimate_mle(h).value) < 1e-3


def test_ww_matches_posterior_monte_carlo():
    rng = np.random.default_rng(21)
    for i in range(10):
        K = int(rng.integers(2, 30))
        counts = rng.integers(0, 15, size=K)
        alpha = float(np.exp(rng.uniform(-3, 2)))
        p = rng.dirichlet(counts + alpha, size=100_000)
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = -np.sum(np.where(p > 0, p * np.log(p), 0.0), axis=1)
        se = ent.std(ddof=1) / math.sqrt(ent.size)
        got = estimate_wolpert_wolf(Histogram(counts), alpha).value
        assert abs(got - ent.mean()) < 3 * se


def test_mle_negative_bias_and_mm_improvement():
    K, N = 100, 100
    errs = {"MLE": [], "MM": []}
    for t in range(1000):
        d = sample_dirichlet_symmetric(K, 1.0, derive_seed(31, 1, t))
        h = draw_histogram(d, N, derive_seed(31, 0, N, t))
        truth = true_entropy(d)
        errs["MLE"].append(estimate_mle(h).value - truth)
        errs["MM"].append(estimate_miller_madow(h).value - truth)
    mle = np.array(errs["MLE"])
    t_stat = mle.mean() / (mle.std(ddof=1) / math.sqrt(mle.size))
    assert t_stat < -5
    assert abs(np.mean(errs["MM"])) < abs(mle.mean())


def test_estimates_are_deterministic():
    h = Histogram([7, 3, 0, 1, 1, 2], 10)
    for e in all_estimators(0.5):
        assert estimate(h, e).value == estimate(h, e).value


def test_estimator_id_parsing():
    assert EstimatorId.parse("ww:0.5") == EstimatorId("WW", 0.5)
    assert EstimatorId.parse("WW(2)") == EstimatorId("WW", 2.0)
    assert EstimatorId.parse("nsb") == EstimatorId("NSB")
    assert str(EstimatorId("WW")) == "WW(1)"
    with pytest.raises(ValueError):
        EstimatorId.parse("pym")
    with pytest.raises(ValueError):
        EstimatorId("MLE", 1.0)
