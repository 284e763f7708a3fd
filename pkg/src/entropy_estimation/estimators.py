"""Entropy estimators for discrete distributions.

Every estimator maps a :class:`~entropy_estimation.distributions.Histogram`
to an estimate in nats.  Estimators that need the support size K (Miller-Madow,
Wolpert-Wolf, NSB) read it from ``Histogram.support_size``.

NSB modes
---------
``"prior"``
    Average the Wolpert-Wolf estimate over the NSB hyperprior alone,
    ``int WW(a) p_nsb(a) da``.  This is the library default.
``"evidence"``
    Weight the hyperprior by the Dirichlet-multinomial marginal likelihood
    of the data and normalize, i.e. the posterior mean over ``a``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .distributions import Histogram
from .mathfns import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    digamma,
    integrate,
    log_gamma_ratio,
    trigamma,
)

__all__ = [
    "ESTIMATOR_NAMES",
    "NSB_MODES",
    "EstimatorId",
    "EntropyEstimate",
    "EstimatorPreconditionError",
    "estimate",
    "estimate_mle",
    "estimate_miller_madow",
    "estimate_jackknife",
    "estimate_horvitz_thompson",
    "estimate_chao_shen",
    "estimate_wolpert_wolf",
    "nsb_hyperprior_density",
    "nsb_prior_entropy",
    "estimate_nsb",
    "log_evidence",
    "all_estimators",
]

ESTIMATOR_NAMES = ("MLE", "MM", "JACK", "HT", "CS", "WW", "NSB")
NSB_MODES = ("prior", "evidence")


class EstimatorPreconditionError(ValueError):
    """The histogram does not satisfy an estimator's preconditions."""


@dataclass(frozen=True, order=True)
class EstimatorId:
    """Which estimator to run; ``alpha`` is only meaningful for ``WW``."""

    name: str
    alpha: Optional[float] = None

    def __post_init__(self):
        name = self.name.upper()
        if name not in ESTIMATOR_NAMES:
            raise ValueError(f"unknown estimator {self.name!r}")
        object.__setattr__(self, "name", name)
        if name == "WW":
            alpha = 1.0 if self.alpha is None else float(self.alpha)
            if not (alpha > 0 and math.isfinite(alpha)):
                raise ValueError("WW needs a strictly positive alpha")
            object.__setattr__(self, "alpha", alpha)
        elif self.alpha is not None:
            raise ValueError(f"{name} takes no alpha parameter")

    def __str__(self):
        if self.name == "WW":
            return f"WW({self.alpha:g})"
        return self.name

    @classmethod
    def parse(cls, text: str) -> "EstimatorId":
        """Parse ``mle``, ``nsb``, ``ww``, ``ww:0.5`` or ``WW(0.5)``."""
        t = text.strip()
        for sep in (":", "="):
            if sep in t:
                name, value = t.split(sep, 1)
                return cls(name, float(value))
        if t.endswith(")") and "(" in t:
            name, value = t[:-1].split("(", 1)
            return cls(name, float(value))
        return cls(t)


def all_estimators(ww_alpha: float = 1.0) -> list:
    """The seven estimators compared throughout, in canonical order."""
    return [EstimatorId(n, ww_alpha if n == "WW" else None) for n in ESTIMATOR_NAMES]


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    estimator: EstimatorId
    sample_size: int
    support_size: int

    def __float__(self):
        return float(self.value)


def _require_samples(h: Histogram, minimum: int = 1) -> int:
    n = h.sample_size
    if n < minimum:
        if n == 0:
            raise EstimatorPreconditionError("histogram is empty")
        raise EstimatorPreconditionError(f"needs at least {minimum} samples, got {n}")
    return n


def _wrap(value: float, name: str, h: Histogram, alpha=None) -> EntropyEstimate:
    return EntropyEstimate(float(value), EstimatorId(name, alpha), h.sample_size, h.support_size)


def _plugin(counts: np.ndarray, n: int) -> float:
    c = counts[counts > 0].astype(float)
    p = c / n
    return float(-np.sum(p * np.log(p)))


def estimate_mle(h: Histogram) -> EntropyEstimate:
    """Plug-in entropy of the empirical frequencies."""
    n = _require_samples(h)
    return _wrap(_plugin(h.counts, n), "MLE", h)


def estimate_miller_madow(h: Histogram) -> EntropyEstimate:
    """Plug-in estimate plus the additive (K - 1) / 2N correction."""
    n = _require_samples(h)
    value = _plugin(h.counts, n) + (h.support_size - 1) / (2.0 * n)
    return _wrap(value, "MM", h)


def estimate_jackknife(h: Histogram, clamp: bool = False) -> EntropyEstimate:
    """Leave-one-out jackknife correction of the plug-in estimate.

    Removing any one of the ``c`` samples of a class gives the same held-out
    histogram, so the N held-out estimates collapse to one evaluation per
    observed class.  With ``clamp=True`` the result is capped at ``log K``.
    """
    n = _require_samples(h, 2)
    c = h.observed.astype(float)
    c_log_c = c * np.log(c)
    s = float(np.sum(c_log_c))
    h_full = math.log(n) - s / n
    # sum_k c_k log c_k after removing one sample from class k
    c_minus = c - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        cm_log_cm = np.where(c_minus > 0, c_minus * np.log(np.where(c_minus > 0, c_minus, 1.0)), 0.0)
    s_held = s - c_log_c + cm_log_cm
    h_held = math.log(n - 1) - s_held / (n - 1)
    value = n * h_full - (n - 1) / n * float(np.sum(c * h_held))
    if clamp:
        value = min(value, math.log(h.support_size))
    return _wrap(value, "JACK", h)


def _inclusion_weighted(p: np.ndarray, n: int) -> float:
    # 1 - (1 - p)^N, accurate for small p
    p = p[p < 1.0]  # a class holding all the mass contributes 0
    inclusion = -np.expm1(n * np.log1p(-p))
    return float(np.sum(-p * np.log(p) / inclusion))


def estimate_horvitz_thompson(h: Histogram) -> EntropyEstimate:
    """Plug-in terms divided by their estimated inclusion probabilities."""
    n = _require_samples(h)
    p = h.observed / n
    return _wrap(_inclusion_weighted(p, n), "HT", h)


def estimate_chao_shen(h: Histogram) -> EntropyEstimate:
    """Horvitz-Thompson on coverage-adjusted probabilities C * p.

    Coverage is estimated as ``1 - f1 / N`` with ``f1`` the number of
    singletons; when every sample is a singleton ``f1`` is taken as N - 1
    so that the coverage stays positive.
    """
    n = _require_samples(h)
    f1 = h.singletons
    if f1 == n:
        f1 = n - 1
    coverage = 1.0 - f1 / n
    p = coverage * h.observed / n
    return _wrap(_inclusion_weighted(p, n), "CS", h)


# --------------------------------------------------------------------------
# Dirichlet-based estimators


def _count_profile(h: Histogram):
    """Distinct count values (including 0 for unseen classes) and multiplicities."""
    values, mult = np.unique(h.counts[h.counts > 0], return_counts=True)
    unseen = h.support_size - int(mult.sum())
    if unseen > 0:
        values = np.concatenate([[0], values])
        mult = np.concatenate([[unseen], mult])
    return values.astype(float), mult.astype(float)


def _ww_curve(values: np.ndarray, mult: np.ndarray, n: int, k: int, alpha) -> np.ndarray:
    """Wolpert-Wolf posterior-mean entropy for each entry of ``alpha``."""
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    total = n + k * a
    post = values[None, :] + a[:, None]
    inner = (mult[None, :] * post * digamma(post + 1.0)).sum(axis=1)
    return digamma(total + 1.0) - inner / total


def estimate_wolpert_wolf(h: Histogram, alpha: float = 1.0) -> EntropyEstimate:
    """Posterior-mean entropy under a symmetric Dirichlet(alpha) prior.

    Every one of the K classes, observed or not, receives pseudo-count
    ``alpha``.  An empty histogram is allowed and gives the prior mean.
    """
    if not (alpha > 0 and math.isfinite(alpha)):
        raise EstimatorPreconditionError("alpha must be strictly positive")
    k = h.support_size
    if k < 1:
        raise EstimatorPreconditionError("support size must be >= 1")
    if k == 1:
        return _wrap(0.0, "WW", h, alpha)
    values, mult = _count_profile(h)
    value = float(_ww_curve(values, mult, h.sample_size, k, alpha)[0])
    return _wrap(value, "WW", h, alpha)


def _nsb_slope(alpha: np.ndarray, k: int) -> np.ndarray:
    """K psi_1(K a + 1) - psi_1(a + 1), with a cancellation-free large-a branch."""
    a = np.asarray(alpha, dtype=float)
    out = np.empty_like(a)
    big = a > 1e3
    if np.any(~big):
        s = a[~big]
        out[~big] = k * trigamma(k * s + 1.0) - trigamma(s + 1.0)
    if np.any(big):
        s = a[big]
        inv = 1.0 / s
        # psi_1(x + 1) = 1/x - 1/2x^2 + 1/6x^3 - 1/30x^5 + 1/42x^7 - ...
        kinv = 1.0 / k
        out[big] = (
            0.5 * (1.0 - kinv) * inv**2
            - (1.0 - kinv**2) / 6.0 * inv**3
            + (1.0 - kinv**4) / 30.0 * inv**5
            - (1.0 - kinv**6) / 42.0 * inv**7
        )
    return out


def nsb_prior_entropy(alpha, K: int):
    """Prior expected entropy psi(K a + 1) - psi(a + 1) under Dirichlet(a)."""
    a = np.asarray(alpha, dtype=float)
    out = digamma(K * a + 1.0) - digamma(a + 1.0)
    return float(out) if np.ndim(alpha) == 0 else out


def nsb_hyperprior_density(alpha, K: int):
    """NSB hyperprior over the Dirichlet concentration ``alpha``.

    ``(K psi_1(K a + 1) - psi_1(a + 1)) / log K``; it is the derivative of
    :func:`nsb_prior_entropy` divided by ``log K``, so it integrates to one
    over (0, inf).
    """
    if K < 2:
        raise EstimatorPreconditionError("the NSB hyperprior needs K >= 2")
    a = np.asarray(alpha, dtype=float)
    if np.any(~(a > 0)) or not np.all(np.isfinite(a)):
        raise EstimatorPreconditionError("alpha must be strictly positive and finite")
    out = _nsb_slope(a, K) / math.log(K)
    return float(out) if np.ndim(alpha) == 0 else out


def _log_rising(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """log Gamma(x + c) - log Gamma(x), elementwise with broadcasting."""
    return log_gamma_ratio(x, c)


def log_evidence(h: Histogram, alpha) -> np.ndarray:
    """Log Dirichlet-multinomial marginal likelihood of ``h`` given alpha.

    Sequence (not multiset) probability, so no multinomial coefficient:
    ``log G(K a) - K log G(a) + sum_k log G(c_k + a) - log G(N + K a)``.
    """
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    k = h.support_size
    c, m = np.unique(h.observed, return_counts=True)
    per_class = (m[None, :] * _log_rising(a[:, None], c[None, :].astype(float))).sum(axis=1)
    out = per_class - _log_rising(k * a, float(h.sample_size))
    return float(out[0]) if np.ndim(alpha) == 0 else out


def _log_weight(h: Histogram, alpha: np.ndarray, mode: str) -> np.ndarray:
    k = h.support_size
    with np.errstate(divide="ignore"):  # slope underflows to 0 far out
        lw = np.log(_nsb_slope(alpha, k))
    if mode == "evidence":
        lw = lw + log_evidence(h, alpha)
    return lw


def _peak_breakpoints(h: Histogram, mode: str):
    """Locate the bulk of the alpha-weight in log(alpha).

    Returns the normalizing log-scale (max of log(w(a) a)) and a list of
    breakpoints at the peak and multiples of its width.
    """
    grid = np.linspace(-30.0, 14.0, 177)

    def neg(u):
        a = np.exp(np.atleast_1d(u))
        return -(_log_weight(h, a, mode) + np.atleast_1d(u))

    values = -neg(grid)
    i = int(np.argmax(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda u: float(neg(u)[0]), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-6})
        u_star = float(res.x) if -res.fun >= values[i] else float(grid[i])
    else:
        u_star = float(grid[i])
    top = float(-neg(u_star)[0])
    # width from the local curvature, bounded to something sensible
    step = 1e-3
    curv = float(-(neg(u_star + step)[0] - 2 * neg(u_star)[0] + neg(u_star - step)[0]) / step**2)
    width = 1.0 / math.sqrt(-curv) if curv < 0 else 2.0
    width = min(max(width, 1e-4), 2.0)
    offsets = np.array([-16, -8, -4, -2, -1, 0, 1, 2, 4, 8, 16], dtype=float) * width
    points = np.exp(np.clip(u_star + offsets, -40.0, 30.0))
    return top, sorted(set(points.tolist()))


def estimate_nsb(
    h: Histogram,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    mode: str = "prior",
) -> EntropyEstimate:
    """Nemenman-Shafee-Bialek estimate: Wolpert-Wolf averaged over alpha.

    Parameters
    ----------
    h : Histogram
        Needs ``N >= 1`` and ``support_size >= 2``.
    spec : QuadratureSpec
        Tolerances for the one-dimensional integral(s) over alpha.
    mode : {"prior", "evidence"}
        See the module docstring.
    """
    if mode not in NSB_MODES:
        raise ValueError(f"mode must be one of {NSB_MODES}")
    n = _require_samples(h)
    k = h.support_size
    if k < 2:
        raise EstimatorPreconditionError("NSB needs support_size >= 2")
    values, mult = _count_profile(h)
    top, points = _peak_breakpoints(h, mode)

    if mode == "prior":
        log_k = math.log(k)

        def numerator(a):
            return _ww_curve(values, mult, n, k, a) * (_nsb_slope(a, k) / log_k)

        value = integrate(numerator, 0.0, math.inf, spec, breakpoints=points)
    else:

        def weight(a):
            lw = _log_weight(h, a, mode) - top
            return np.exp(np.minimum(lw, 700.0))

        def numerator(a):
            return _ww_curve(values, mult, n, k, a) * weight(a)

        z = integrate(weight, 0.0, math.inf, spec, breakpoints=points)
        value = integrate(numerator, 0.0, math.inf, spec, breakpoints=points) / z
    return _wrap(value, "NSB", h)


def estimate(
    h: Histogram,
    estimator: EstimatorId,
    nsb_mode: str = "prior",
    quadrature: QuadratureSpec = DEFAULT_QUADRATURE,
    jack_clamp: bool = False,
) -> EntropyEstimate:
    """Dispatch on ``estimator``."""
    name = estimator.name
    if name == "MLE":
        return estimate_mle(h)
    if name == "MM":
        return estimate_miller_madow(h)
    if name == "JACK":
        return estimate_jackknife(h, clamp=jack_clamp)
    if name == "HT":
        return estimate_horvitz_thompson(h)
    if name == "CS":
        return estimate_chao_shen(h)
    if name == "WW":
        return estimate_wolpert_wolf(h, estimator.alpha)
    if name == "NSB":
        return estimate_nsb(h, quadrature, nsb_mode)
    raise ValueError(f"unknown estimator {estimator}")  # pragma: no cover


def estimate_or_fallback(h: Histogram, estimator: EstimatorId, **kwargs) -> float:
    """Like :func:`estimate` but falls back to MLE where JACK cannot run.

    Used on conditional slices, where a single-sample column is common.
    """
    if estimator.name == "JACK" and h.sample_size == 1:
        warnings.warn("jackknife on a single-sample slice; using the plug-in estimate",
                      RuntimeWarning, stacklevel=2)
        return estimate_mle(h).value
    return estimate(h, estimator, **kwargs).value
