"""Experiment harness: repeated sampling, error metrics, significance tests.

Seeds
-----
All randomness flows from ``ExperimentConfig.base_seed`` through
:func:`~entropy_estimation.distributions.derive_seed`:

* truth distribution for trial ``t`` (Dirichlet family): ``(base, 1, t)``
* histogram for sample size ``N``, trial ``t``:            ``(base, 0, N, t)``
* permutation test at ``N`` between estimators ``i < j``:  ``(base, 2, N, m, i, j)``
  where ``m`` is 0 for MAB and 1 for MSE.

Trial results therefore do not depend on execution order.

Support size
------------
``ExperimentConfig.support_policy`` decides which K the K-dependent
estimators see:

* ``"declared"``: every estimator gets the truth's full support size.
* ``"observed"``: every estimator gets the number of observed classes.
* ``"auto"`` (default): Miller-Madow and Wolpert-Wolf get the observed class
  count, NSB gets the declared support.  The Miller-Madow term is an
  ``N >> K`` expansion and a fixed-alpha Dirichlet prior over thousands of
  unseen classes swamps small samples, while the NSB hyperprior is defined
  in terms of the alphabet size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.stats import studentized_range

from .distributions import (
    CategoricalDistribution,
    Histogram,
    derive_seed,
    draw_histogram,
    from_counts,
    rng_from_seed,
    sample_dirichlet_symmetric,
    true_entropy,
    truncate_top,
    zipfian,
)
from .estimators import EstimatorId, all_estimators, estimate
from .mathfns import DEFAULT_QUADRATURE, QuadratureSpec

__all__ = [
    "METRICS",
    "TruthSpec",
    "ExperimentConfig",
    "TrialReport",
    "ComparisonResult",
    "TukeyTable",
    "WinnerRow",
    "ExperimentError",
    "SUPPORT_POLICIES",
    "support_view",
    "run_experiment",
    "paired_permutation_test",
    "tukey_all_pairs",
    "studentized_range_critical",
    "best_estimator_table",
    "compare_all",
]

METRICS = ("MAB", "MSE")
FAMILIES = ("dirichlet", "zipf", "empirical")
SUPPORT_POLICIES = ("auto", "declared", "observed")
_OBSERVED_UNDER_AUTO = frozenset({"MM", "WW"})


class ExperimentError(RuntimeError):
    """An estimator failed inside :func:`run_experiment`."""

    def __init__(self, estimator: EstimatorId, N: int, trial: int, cause: Exception):
        self.estimator = estimator
        self.N = N
        self.trial = trial
        self.cause = cause
        super().__init__(f"{estimator} failed at N={N}, trial={trial}: {cause}")


@dataclass(frozen=True)
class TruthSpec:
    """Where the ground-truth distribution of each trial comes from.

    ``dirichlet`` draws a fresh Dirichlet(alpha) distribution for every
    trial (the same one across all sample sizes); ``zipf`` and ``empirical``
    use one fixed distribution.
    """

    family: str
    K: Optional[int] = None
    alpha: float = 1.0
    exponent: float = 1.0
    counts: Optional[Mapping[str, int]] = None
    top: Optional[int] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.family in ("dirichlet", "zipf") and (self.K is None or self.K < 1):
            raise ValueError(f"{self.family} truth needs K >= 1")
        if self.family == "empirical" and not self.counts:
            raise ValueError("empirical truth needs counts")

    def fixed(self) -> Optional[CategoricalDistribution]:
        if self.family == "zipf":
            return zipfian(self.K, self.exponent)
        if self.family == "empirical":
            return from_counts(truncate_top(self.counts, self.top))
        return None

    def for_trial(self, base_seed: int, trial: int) -> CategoricalDistribution:
        dist = self.fixed()
        if dist is not None:
            return dist
        return sample_dirichlet_symmetric(self.K, self.alpha, derive_seed(base_seed, 1, trial))

    def describe(self) -> dict:
        out = {"family": self.family}
        if self.family == "dirichlet":
            out.update(K=self.K, alpha=self.alpha)
        elif self.family == "zipf":
            out.update(K=self.K, exponent=self.exponent)
        else:
            out.update(classes=len(self.counts), top=self.top)
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    truth: TruthSpec
    sample_sizes: Sequence[int]
    trials: int = 100
    estimators: Sequence[EstimatorId] = field(default_factory=all_estimators)
    base_seed: int = 0
    permutations: int = 1000
    nsb_mode: str = "prior"
    quadrature: QuadratureSpec = DEFAULT_QUADRATURE
    alpha_level: float = 0.05
    support_policy: str = "auto"

    def __post_init__(self):
        if self.trials < 2:
            raise ValueError("trials must be >= 2")
        if self.permutations < 1:
            raise ValueError("permutations must be >= 1")
        if not self.sample_sizes or any(int(n) < 1 for n in self.sample_sizes):
            raise ValueError("sample_sizes must be non-empty and each >= 1")
        if not self.estimators:
            raise ValueError("at least one estimator is required")
        if self.support_policy not in SUPPORT_POLICIES:
            raise ValueError(f"support_policy must be one of {SUPPORT_POLICIES}")
        if not 0 < self.alpha_level < 1:
            raise ValueError("alpha_level must be in (0, 1)")
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "estimators", tuple(self.estimators))


@dataclass
class TrialReport:
    """Aggregated errors of one estimator at one sample size."""

    estimator: EstimatorId
    N: int
    errors: np.ndarray
    bias: float
    variance: float
    mse: float
    mab: float
    mean_estimate: float
    mean_truth: float
    failure: Optional[str] = None

    @classmethod
    def from_trials(cls, estimator, N, estimates, truths) -> "TrialReport":
        est = np.asarray(estimates, dtype=float)
        truth = np.asarray(truths, dtype=float)
        errors = est - truth
        bias = float(np.mean(errors))
        return cls(
            estimator=estimator,
            N=int(N),
            errors=errors,
            bias=bias,
            variance=float(np.mean((errors - bias) ** 2)),
            mse=float(np.mean(errors**2)),
            mab=float(np.mean(np.abs(errors))),
            mean_estimate=float(np.mean(est)),
            mean_truth=float(np.mean(truth)),
        )

    @classmethod
    def failed(cls, estimator, N, trials: int, message: str) -> "TrialReport":
        nan = float("nan")
        return cls(estimator, int(N), np.full(trials, nan), nan, nan, nan, nan, nan, nan, message)

    def metric(self, name: str) -> float:
        return self.mab if name == "MAB" else self.mse


def _metric_values(errors: np.ndarray, metric: str) -> np.ndarray:
    if metric == "MAB":
        return np.abs(errors)
    if metric == "MSE":
        return errors**2
    raise ValueError(f"metric must be one of {METRICS}")


def support_view(hist: Histogram, estimator: EstimatorId, policy: str = "auto") -> Histogram:
    """The histogram as ``estimator`` should see it under ``policy``."""
    if policy == "observed" or (policy == "auto" and estimator.name in _OBSERVED_UNDER_AUTO):
        return Histogram(hist.observed)
    return hist


def run_experiment(config: ExperimentConfig, on_error: str = "raise") -> list:
    """Run every estimator on the same histograms; one report per (estimator, N).

    With ``on_error="record"`` a failing estimator yields a report whose
    ``failure`` field is set (metrics NaN) instead of aborting the run.
    """
    if on_error not in ("raise", "record"):
        raise ValueError("on_error must be 'raise' or 'record'")
    trials = config.trials
    dists = [config.truth.for_trial(config.base_seed, t) for t in range(trials)]
    truths = np.array([true_entropy(d) for d in dists])
    reports = []
    for N in config.sample_sizes:
        estimates = {e: np.empty(trials) for e in config.estimators}
        failures = {}
        for t in range(trials):
            hist = draw_histogram(dists[t], N, derive_seed(config.base_seed, 0, N, t))
            for e in config.estimators:
                if e in failures:
                    continue
                view = support_view(hist, e, config.support_policy)
                try:
                    estimates[e][t] = estimate(
                        view, e, nsb_mode=config.nsb_mode, quadrature=config.quadrature
                    ).value
                except Exception as exc:
                    err = ExperimentError(e, N, t, exc)
                    if on_error == "raise":
                        raise err from exc
                    failures[e] = str(err)
        for e in config.estimators:
            if e in failures:
                reports.append(TrialReport.failed(e, N, trials, failures[e]))
            else:
                reports.append(TrialReport.from_trials(e, N, estimates[e], truths))
    return reports


@dataclass(frozen=True)
class ComparisonResult:
    """Outcome of one pairwise comparison; ``winner`` is None for a tie."""

    estimator_a: Optional[EstimatorId]
    estimator_b: Optional[EstimatorId]
    metric: str
    p_value: float
    winner: Optional[EstimatorId]
    difference: float = 0.0
    significant: bool = False
    test: str = "permutation"


def paired_permutation_test(
    errors_a,
    errors_b,
    metric: str = "MAB",
    permutations: int = 1000,
    seed: int = 0,
    estimator_a: Optional[EstimatorId] = None,
    estimator_b: Optional[EstimatorId] = None,
    alpha_level: float = 0.05,
) -> ComparisonResult:
    """Two-sided paired permutation test on the difference of a metric.

    Each permutation swaps the two estimators' errors on a random subset of
    trials (independently, probability 1/2 each) and recomputes
    ``metric(a) - metric(b)``.  The p-value counts permutations at least as
    extreme as the observed difference, with the add-one correction
    ``(r + 1) / (P + 1)``.
    """
    a = np.asarray(errors_a, dtype=float)
    b = np.asarray(errors_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired error vectors must have the same length")
    if a.size < 2:
        raise ValueError("need at least two paired trials")
    if permutations < 1:
        raise ValueError("permutations must be >= 1")
    d = _metric_values(a, metric) - _metric_values(b, metric)
    observed = float(np.mean(d))
    rng = rng_from_seed(seed)
    signs = np.where(rng.random((permutations, d.size)) < 0.5, -1.0, 1.0)
    permuted = signs @ d / d.size
    # tolerance so that exact ties (e.g. identical inputs) count as extreme
    tol = 1e-12 * max(1.0, float(np.max(np.abs(d))))
    extreme = int(np.count_nonzero(np.abs(permuted) >= abs(observed) - tol))
    p = (extreme + 1) / (permutations + 1)
    significant = p < alpha_level and observed != 0.0
    winner = None
    if significant:
        winner = estimator_a if observed < 0 else estimator_b
    return ComparisonResult(estimator_a, estimator_b, metric, p, winner, observed, significant)


@lru_cache(maxsize=None)
def studentized_range_critical(k: int, df: float, alpha_level: float = 0.05) -> float:
    """Upper ``alpha_level`` quantile of the studentized range q(k, df)."""
    return float(studentized_range.ppf(1.0 - alpha_level, k, df))


@dataclass
class TukeyTable:
    """All-pairs Tukey HSD comparisons among estimators at one N."""

    estimators: list
    metric: str
    means: np.ndarray
    comparisons: list
    critical_value: float
    beat_counts: dict

    @property
    def matrix(self) -> list:
        """k x k list with ``None`` on the diagonal."""
        k = len(self.estimators)
        out = [[None] * k for _ in range(k)]
        index = {e: i for i, e in enumerate(self.estimators)}
        for c in self.comparisons:
            i, j = index[c.estimator_a], index[c.estimator_b]
            out[i][j] = out[j][i] = c
        return out

    def significant_pairs(self) -> list:
        return [(c.estimator_a, c.estimator_b) for c in self.comparisons if c.significant]


def tukey_all_pairs(reports: Sequence[TrialReport], metric: str = "MAB",
                    alpha_level: float = 0.05) -> TukeyTable:
    """Tukey HSD over per-trial |error| (MAB) or error**2 (MSE).

    Groups are the estimators, observations the per-trial metric values.
    The pooled within-group variance has ``k (n - 1)`` degrees of freedom.
    If that variance is exactly zero, pairs with different means are called
    significant (p = 0) and pairs with equal means are tied (p = 1).
    """
    reports = list(reports)
    if len(reports) < 2:
        raise ValueError("Tukey comparison needs at least two estimators")
    n = reports[0].errors.size
    if any(r.errors.size != n for r in reports):
        raise ValueError("all reports must have the same number of trials")
    if n < 2:
        raise ValueError("need at least two trials per estimator")
    values = np.stack([_metric_values(r.errors, metric) for r in reports])
    k = values.shape[0]
    means = values.mean(axis=1)
    df = k * (n - 1)
    msw = float(np.sum((values - means[:, None]) ** 2) / df)
    se = math.sqrt(msw / n)
    q_crit = studentized_range_critical(k, df, alpha_level)
    estimators = [r.estimator for r in reports]
    beat = {e: 0 for e in estimators}
    comparisons = []
    for i in range(k):
        for j in range(i + 1, k):
            diff = float(means[i] - means[j])
            if se == 0.0:
                p = 0.0 if diff != 0.0 else 1.0
            else:
                p = float(studentized_range.sf(abs(diff) / se, k, df))
            significant = p < alpha_level
            winner = None
            if significant:
                winner = estimators[i] if diff < 0 else estimators[j]
                beat[winner] += 1
            comparisons.append(
                ComparisonResult(estimators[i], estimators[j], metric, p, winner, diff,
                                 significant, "tukey")
            )
    return TukeyTable(estimators, metric, means, comparisons, q_crit, beat)


@dataclass(frozen=True)
class WinnerRow:
    N: int
    metric: str
    winner: EstimatorId
    value: float
    tie: bool
    beat_count: int


def best_estimator_table(
    reports: Sequence[TrialReport],
    tukey: Optional[Mapping] = None,
    metric: str = "MAB",
) -> list:
    """Per-N winner (lowest metric) with its Tukey beat-count.

    Exact ties go to the lexicographically smallest estimator name and are
    flagged.  ``tukey`` maps ``(N, metric)`` to a :class:`TukeyTable`; when
    absent the beat-count is 0.
    """
    by_n: dict = {}
    for r in reports:
        if r.failure is None:
            by_n.setdefault(r.N, []).append(r)
    rows = []
    for N in sorted(by_n):
        group = by_n[N]
        best = min(r.metric(metric) for r in group)
        tied = sorted((r for r in group if r.metric(metric) == best), key=lambda r: str(r.estimator))
        win = tied[0]
        beats = 0
        if tukey is not None and (N, metric) in tukey:
            beats = tukey[(N, metric)].beat_counts.get(win.estimator, 0)
        rows.append(WinnerRow(N, metric, win.estimator, best, len(tied) > 1, beats))
    return rows


@dataclass
class Comparisons:
    permutation: dict
    tukey: dict
    winners: list


def compare_all(
    reports: Sequence[TrialReport],
    base_seed: int = 0,
    permutations: int = 1000,
    alpha_level: float = 0.05,
    metrics: Sequence[str] = METRICS,
) -> Comparisons:
    """Permutation tests for every estimator pair, Tukey tables and winners."""
    by_n: dict = {}
    for r in reports:
        if r.failure is None:
            by_n.setdefault(r.N, []).append(r)
    perm: dict = {}
    tukey: dict = {}
    for N, group in sorted(by_n.items()):
        for m_idx, metric in enumerate(metrics):
            results = []
            for i in range(len(group)):
                for j in range(i + 1, len(group)):
                    seed = derive_seed(base_seed, 2, N, m_idx, i, j)
                    results.append(
                        paired_permutation_test(
                            group[i].errors, group[j].errors, metric, permutations, seed,
                            group[i].estimator, group[j].estimator, alpha_level,
                        )
                    )
            perm[(N, metric)] = results
            if len(group) >= 2:
                tukey[(N, metric)] = tukey_all_pairs(group, metric, alpha_level)
    winners = []
    for metric in metrics:
        winners.extend(best_estimator_table(reports, tukey, metric))
    return Comparisons(perm, tukey, winners)
