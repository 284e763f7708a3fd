import numpy as np
import pytest
from scipy import stats

from entropy_estimation.distributions import Histogram, derive_seed, draw_histogram, zipfian
from entropy_estimation.estimators import EstimatorId, all_estimators, estimate
from entropy_estimation.evaluation import (
    ExperimentConfig,
    ExperimentError,
    TrialReport,
    TruthSpec,
    best_estimator_table,
    compare_all,
    paired_permutation_test,
    run_experiment,
    studentized_range_critical,
    support_view,
    tukey_all_pairs,
)

MLE, MM, NSB, CS = (EstimatorId(n) for n in ("MLE", "MM", "NSB", "CS"))


def _report(name, errors, N=10):
    return TrialReport.from_trials(EstimatorId(name), N, np.asarray(errors, float), np.zeros(len(errors)))


def test_aggregation_arithmetic():
    r = _report("MLE", [0.1, -0.1])
    assert r.bias == pytest.approx(0.0, abs=1e-15)
    assert (r.mab, r.mse, r.variance) == pytest.approx((0.1, 0.01, 0.01))


def test_point_mass_truth_has_zero_error():
    config = ExperimentConfig(TruthSpec("empirical", counts={"a": 4}), [1, 50], trials=3,
                              estimators=[MLE])
    for r in run_experiment(config):
        assert r.bias == 0.0 and r.mse == 0.0


def test_mse_identity_and_paired_design():
    config = ExperimentConfig(TruthSpec("zipf", K=30), [20, 80], trials=12,
                              estimators=all_estimators(), base_seed=5)
    reports = run_experiment(config)
    for r in reports:
        assert r.variance == pytest.approx(r.mse - r.bias**2, abs=1e-10)
    # recompute one trial by hand: every estimator saw the same histogram
    dist = zipfian(30)
    t, N = 7, 80
    hist = draw_histogram(dist, N, derive_seed(5, 0, N, t))
    truth = reports[0].mean_truth
    for r in (r for r in reports if r.N == N):
        view = support_view(hist, r.estimator, config.support_policy)
        expected = estimate(view, r.estimator, nsb_mode=config.nsb_mode).value - truth
        assert r.errors[t] == pytest.approx(expected, abs=1e-13)


def test_support_policies():
    h = Histogram([3, 0, 1, 0], 4)
    assert support_view(h, MM, "auto").support_size == 2
    assert support_view(h, NSB, "auto").support_size == 4
    assert support_view(h, MM, "declared").support_size == 4
    assert support_view(h, NSB, "observed").support_size == 2


def test_dirichlet_truth_varies_per_trial_but_not_per_n():
    truth = TruthSpec("dirichlet", K=20, alpha=1.0)
    p0 = truth.for_trial(3, 0).probabilities
    assert not np.array_equal(p0, truth.for_trial(3, 1).probabilities)
    assert np.array_equal(p0, truth.for_trial(3, 0).probabilities)


def test_run_is_deterministic():
    config = ExperimentConfig(TruthSpec("dirichlet", K=15), [10, 40], trials=6, base_seed=99)
    a, b = run_experiment(config), run_experiment(config)
    for ra, rb in zip(a, b):
        assert ra.estimator == rb.estimator and np.array_equal(ra.errors, rb.errors)


def test_nsb_beats_mle_on_zipf_k100():
    config = ExperimentConfig(TruthSpec("zipf", K=100), [100], trials=100,
                              estimators=[MLE, NSB], base_seed=1)
    mle, nsb = run_experiment(config)
    assert nsb.mab < mle.mab


def test_mm_wins_against_mle_on_dirichlet():
    config = ExperimentConfig(TruthSpec("dirichlet", K=100), [100], trials=200,
                              estimators=[MLE, MM], base_seed=2)
    rows = best_estimator_table(run_experiment(config), metric="MAB")
    assert rows[0].winner == MM


@pytest.mark.parametrize("kwargs", [
    dict(trials=1), dict(permutations=0), dict(sample_sizes=[]), dict(sample_sizes=[0]),
    dict(estimators=[]), dict(support_policy="guess"),
])
def test_config_validation(kwargs):
    base = dict(truth=TruthSpec("zipf", K=5), sample_sizes=[10])
    base.update(kwargs)
    with pytest.raises(ValueError):
        ExperimentConfig(**base)


def test_estimator_failure_is_tagged_or_recorded():
    # JACK cannot run on N = 1
    config = ExperimentConfig(TruthSpec("zipf", K=5), [1], trials=2,
                              estimators=[MLE, EstimatorId("JACK")])
    with pytest.raises(ExperimentError) as info:
        run_experiment(config)
    assert info.value.estimator.name == "JACK" and info.value.N == 1 and info.value.trial == 0
    reports = run_experiment(config, on_error="record")
    assert reports[0].failure is None and "JACK" in reports[1].failure


def test_permutation_identical_vectors():
    e = np.random.default_rng(0).normal(size=30)
    assert paired_permutation_test(e, e, "MAB", 500, 1).p_value == 1.0


def test_permutation_large_gap():
    r = paired_permutation_test(np.full(50, 0.5), np.zeros(50), "MAB", 1000, 3)
    assert r.p_value <= 2 / 1001
    assert r.winner is None or r.winner == r.estimator_b


def test_permutation_symmetry():
    rng = np.random.default_rng(4)
    a, b = rng.normal(0, 1, 40), rng.normal(0.3, 1, 40)
    for metric in ("MAB", "MSE"):
        x = paired_permutation_test(a, b, metric, 999, 8)
        y = paired_permutation_test(b, a, metric, 999, 8)
        assert x.difference == pytest.approx(-y.difference)
        assert x.p_value == y.p_value


def test_permutation_bounds_and_errors():
    rng = np.random.default_rng(6)
    p = paired_permutation_test(rng.normal(size=20), rng.normal(size=20), "MSE", 99, 0).p_value
    assert 1 / 100 <= p <= 1
    with pytest.raises(ValueError):
        paired_permutation_test([1, 2, 3], [1, 2], "MAB")
    with pytest.raises(ValueError):
        paired_permutation_test([1.0], [2.0], "MAB")


def test_permutation_null_is_uniform():
    rng = np.random.default_rng(12)
    ps = [paired_permutation_test(rng.normal(size=30), rng.normal(size=30), "MAB", 199,
                                  derive_seed(12, i)).p_value for i in range(500)]
    assert stats.kstest(ps, "uniform").statistic < 0.08


def test_tukey_reference_critical_value():
    assert studentized_range_critical(3, 27, 0.05) == pytest.approx(3.51, abs=0.01)


def test_tukey_identical_groups():
    errors = np.random.default_rng(1).normal(size=25)
    table = tukey_all_pairs([_report("MLE", errors), _report("MM", errors)], "MAB")
    assert table.significant_pairs() == []


def test_tukey_separated_groups():
    rng = np.random.default_rng(2)
    reps = [_report(n, m + 1e-3 * rng.normal(size=20))
            for n, m in (("MLE", 0.0), ("MM", 0.0), ("CS", 10.0))]
    table = tukey_all_pairs(reps, "MAB")
    pairs = {frozenset((str(a), str(b))) for a, b in table.significant_pairs()}
    assert pairs == {frozenset(("MLE", "CS")), frozenset(("MM", "CS"))}
    assert table.beat_counts[MLE] == 1 and table.beat_counts[CS] == 0
    m = table.matrix
    assert m[0][0] is None and m[0][2] is m[2][0]


def test_tukey_zero_variance_convention():
    reps = [_report("MLE", [1.0] * 5), _report("MM", [1.0] * 5), _report("CS", [2.0] * 5)]
    table = tukey_all_pairs(reps, "MAB")
    by_pair = {frozenset((str(c.estimator_a), str(c.estimator_b))): c.p_value for c in table.comparisons}
    assert by_pair[frozenset(("MLE", "MM"))] == 1.0
    assert by_pair[frozenset(("MLE", "CS"))] == 0.0


def test_tukey_requires_equal_trials():
    with pytest.raises(ValueError):
        tukey_all_pairs([_report("MLE", [1, 2, 3]), _report("MM", [1, 2])])
    with pytest.raises(ValueError):
        tukey_all_pairs([_report("MLE", [1, 2, 3])])


def test_winner_table_single_estimator_and_ties():
    rows = best_estimator_table([_report("MM", [0.2, -0.2])])
    assert rows[0].winner == MM and rows[0].beat_count == 0 and not rows[0].tie
    rows = best_estimator_table([_report("MM", [0.2, 0.2]), _report("CS", [-0.2, 0.2])])
    assert rows[0].winner == CS and rows[0].tie


def test_compare_all_structure():
    config = ExperimentConfig(TruthSpec("zipf", K=40), [30], trials=10,
                              estimators=[MLE, MM, CS], permutations=99)
    comp = compare_all(run_experiment(config), permutations=99)
    assert len(comp.permutation[(30, "MAB")]) == 3
    assert set(comp.tukey) == {(30, "MAB"), (30, "MSE")}
    assert [w.metric for w in comp.winners] == ["MAB", "MSE"]
    for results in comp.permutation.values():
        assert all(0 < c.p_value <= 1 for c in results)
