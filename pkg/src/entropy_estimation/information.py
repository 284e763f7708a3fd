"""Mutual information, variation of information and clustering.

MI is computed as a difference of separately estimated entropies,
``H(X) - H(X|Y)``, where ``H(X|Y) = sum_c (N_c / N) H(X | Y = c)`` and every
entropy goes through the same estimator.  X-entropies use support size R
(rows) and Y-entropies use C (columns).  Under estimators other than MLE the
result can be negative; that is reported, not clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .distributions import Histogram, rng_from_seed
from .estimators import EstimatorId, estimate_or_fallback
from .mathfns import DEFAULT_QUADRATURE, QuadratureSpec

__all__ = [
    "NORMALIZERS",
    "JointCountTable",
    "MIResult",
    "ClusterTree",
    "estimate_mi",
    "normalized_mi",
    "variation_of_information",
    "mi_permutation_significance",
    "hierarchical_cluster",
]

NORMALIZERS = ("min", "max", "sqrt")


@dataclass(frozen=True)
class JointCountTable:
    """R x C co-occurrence counts of X (rows) and Y (columns)."""

    counts: np.ndarray
    row_labels: Optional[tuple] = None
    col_labels: Optional[tuple] = None

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValueError("joint counts must be a non-empty 2-d array")
        if not np.issubdtype(c.dtype, np.integer):
            if np.any(c != np.round(c)):
                raise ValueError("joint counts must be integers")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise ValueError("joint counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        for name, size in (("row_labels", c.shape[0]), ("col_labels", c.shape[1])):
            labels = getattr(self, name)
            if labels is None:
                labels = tuple(str(i) for i in range(size))
            labels = tuple(labels)
            if len(labels) != size:
                raise ValueError(f"{name} has the wrong length")
            object.__setattr__(self, name, labels)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def shape(self):
        return self.counts.shape

    def row_marginal(self) -> Histogram:
        return Histogram(self.counts.sum(axis=1), self.shape[0])

    def col_marginal(self) -> Histogram:
        return Histogram(self.counts.sum(axis=0), self.shape[1])

    def transpose(self) -> "JointCountTable":
        return JointCountTable(self.counts.T.copy(), self.col_labels, self.row_labels)

    def samples(self):
        """Expand to paired (x, y) index arrays, one entry per observation."""
        flat = self.counts.ravel()
        idx = np.repeat(np.arange(flat.size), flat)
        return idx // self.shape[1], idx % self.shape[1]

    @classmethod
    def from_samples(cls, x, y, R: int, C: int, row_labels=None, col_labels=None):
        flat = np.bincount(np.asarray(x) * C + np.asarray(y), minlength=R * C)
        return cls(flat.reshape(R, C), row_labels, col_labels)


@dataclass(frozen=True)
class MIResult:
    """Estimated MI with the entropies it was built from.

    ``nmi`` is filled by :func:`normalized_mi`; ``nmi_clamped`` records that
    the raw ratio fell outside [0, 1].  ``negative`` flags ``mi < 0``.
    """

    mi: float
    estimator: EstimatorId
    h_x: float
    h_x_given_y: float
    nmi: Optional[float] = None
    nmi_clamped: bool = False
    normalizer: Optional[str] = None
    p_value: Optional[float] = None

    @property
    def negative(self) -> bool:
        return self.mi < 0


def _entropy(h: Histogram, estimator: EstimatorId, nsb_mode: str, quadrature: QuadratureSpec) -> float:
    if h.support_size == 1:
        return 0.0
    return estimate_or_fallback(h, estimator, nsb_mode=nsb_mode, quadrature=quadrature)


def _conditional(counts: np.ndarray, support: int, estimator, nsb_mode, quadrature) -> float:
    """sum_c (N_c / N) H(column c), columns being distributions over rows."""
    totals = counts.sum(axis=0)
    n = totals.sum()
    acc = 0.0
    for col in np.flatnonzero(totals):
        h = Histogram(counts[:, col], support)
        acc += totals[col] / n * _entropy(h, estimator, nsb_mode, quadrature)
    return float(acc)


def estimate_mi(
    table: JointCountTable,
    estimator: EstimatorId,
    nsb_mode: str = "prior",
    quadrature: QuadratureSpec = DEFAULT_QUADRATURE,
) -> MIResult:
    """MI(X; Y) = H(X) - H(X|Y) with every entropy from ``estimator``."""
    if table.total < 1:
        raise ValueError("joint table is empty")
    r = table.shape[0]
    h_x = _entropy(table.row_marginal(), estimator, nsb_mode, quadrature)
    h_xy = _conditional(table.counts, r, estimator, nsb_mode, quadrature)
    return MIResult(h_x - h_xy, estimator, h_x, h_xy)


def normalized_mi(
    result: MIResult,
    table: JointCountTable,
    normalizer: str = "min",
    nsb_mode: str = "prior",
    quadrature: QuadratureSpec = DEFAULT_QUADRATURE,
) -> MIResult:
    """Divide MI by min, max or geometric mean of H(X), H(Y).

    The ratio is clamped to [0, 1]; ``nmi_clamped`` is set when that
    changed it.  Raises ``ValueError`` if both marginal entropies are 0.
    """
    if normalizer not in NORMALIZERS:
        raise ValueError(f"normalizer must be one of {NORMALIZERS}")
    h_x = result.h_x
    h_y = _entropy(table.col_marginal(), result.estimator, nsb_mode, quadrature)
    if h_x == 0.0 and h_y == 0.0:
        raise ValueError("both marginal entropies are zero; NMI is undefined")
    if normalizer == "min":
        norm = min(h_x, h_y)
    elif normalizer == "max":
        norm = max(h_x, h_y)
    else:
        norm = math.sqrt(max(h_x, 0.0) * max(h_y, 0.0))
    raw = result.mi / norm if norm > 0 else 0.0
    nmi = min(max(raw, 0.0), 1.0)
    return replace(result, nmi=nmi, nmi_clamped=(nmi != raw), normalizer=normalizer)


def variation_of_information(
    table: JointCountTable,
    estimator: EstimatorId,
    nsb_mode: str = "prior",
    quadrature: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """VI = H(X|Y) + H(Y|X), each conditional estimated slice by slice."""
    if table.total < 1:
        raise ValueError("joint table is empty")
    r, c = table.shape
    h_xy = _conditional(table.counts, r, estimator, nsb_mode, quadrature)
    h_yx = _conditional(table.counts.T, c, estimator, nsb_mode, quadrature)
    return h_xy + h_yx


def mi_permutation_significance(
    table: JointCountTable,
    estimator: EstimatorId,
    permutations: int = 1000,
    seed: int = 0,
    nsb_mode: str = "prior",
    quadrature: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Permutation p-value for MI > 0.

    The table is expanded into paired samples and the Y column shuffled
    ``permutations`` times.  ``p = (#{MI_perm >= MI_obs} + 1) / (P + 1)``.
    Shuffling leaves the X marginal unchanged, so only ``H(X|Y)`` is
    recomputed.
    """
    if table.total < 2:
        raise ValueError("need at least two samples")
    if permutations < 1:
        raise ValueError("permutations must be >= 1")
    r, c = table.shape
    observed = _conditional(table.counts, r, estimator, nsb_mode, quadrature)
    x, y = table.samples()
    rng = rng_from_seed(seed)
    tol = 1e-12 * max(1.0, abs(observed))
    hits = 0
    for _ in range(permutations):
        y_perm = rng.permutation(y)
        counts = np.bincount(x * c + y_perm, minlength=r * c).reshape(r, c)
        # MI_perm >= MI_obs  <=>  H(X|Y)_perm <= H(X|Y)_obs
        if _conditional(counts, r, estimator, nsb_mode, quadrature) <= observed + tol:
            hits += 1
    return (hits + 1) / (permutations + 1)


# --------------------------------------------------------------------------
# clustering


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass
class ClusterTree:
    """Binary merge tree over ``labels``.

    Leaves have ids ``0..n-1``; the i-th merge creates id ``n + i``.  In
    Newick output a node sits at depth ``height / 2`` (so two leaves merged
    at distance d each get branch length d/2).
    """

    labels: tuple
    merges: list = field(default_factory=list)

    def _leaves(self, node: int) -> list:
        n = len(self.labels)
        if node < n:
            return [node]
        m = self.merges[node - n]
        return self._leaves(m.left) + self._leaves(m.right)

    def _depth(self, node: int) -> float:
        n = len(self.labels)
        return 0.0 if node < n else self.merges[node - n].height / 2.0

    def clusters(self) -> list:
        """Leaf-label sets of every internal node, in merge order."""
        n = len(self.labels)
        return [frozenset(self.labels[i] for i in self._leaves(n + k)) for k in range(len(self.merges))]

    def newick(self) -> str:
        n = len(self.labels)

        def render(node: int, parent_depth: float) -> str:
            length = format(parent_depth - self._depth(node), ".12g")
            if node < n:
                return f"{_newick_label(self.labels[node])}:{length}"
            m = self.merges[node - n]
            kids = sorted((m.left, m.right), key=lambda c: min(self._leaves(c)))
            depth = self._depth(node)
            inner = ",".join(render(k, depth) for k in kids)
            return f"({inner}):{length}"

        if not self.merges:
            return f"{_newick_label(self.labels[0])};"
        root = n + len(self.merges) - 1
        m = self.merges[-1]
        kids = sorted((m.left, m.right), key=lambda c: min(self._leaves(c)))
        depth = self._depth(root)
        return "(" + ",".join(render(k, depth) for k in kids) + ");"


def _newick_label(label: str) -> str:
    text = str(label)
    if any(ch in text for ch in " \t\n()[]':;,"):
        return "'" + text.replace("'", "''") + "'"
    return text


def hierarchical_cluster(distances, labels: Optional[Sequence[str]] = None) -> ClusterTree:
    """Average-linkage (UPGMA) agglomerative clustering.

    Among equally close pairs of clusters the one with the smallest
    (id, id) pair is merged first.
    """
    d = np.asarray(distances, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    n = d.shape[0]
    if n < 2:
        raise ValueError("need at least two items to cluster")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValueError("distances must be finite and non-negative")
    if np.any(np.diag(d) != 0):
        raise ValueError("distance matrix must have a zero diagonal")
    if not np.allclose(d, d.T, rtol=0, atol=1e-12):
        raise ValueError("distance matrix must be symmetric")
    labels = tuple(str(i) for i in range(n)) if labels is None else tuple(str(x) for x in labels)
    if len(labels) != n:
        raise ValueError("labels and matrix size differ")

    dist = {(i, j): float(d[i, j]) for i in range(n) for j in range(i + 1, n)}
    size = {i: 1 for i in range(n)}
    active = list(range(n))
    tree = ClusterTree(labels)
    next_id = n
    while len(active) > 1:
        (a, b), height = min(dist.items(), key=lambda kv: (kv[1], kv[0]))
        tree.merges.append(Merge(a, b, height, size[a] + size[b]))
        active = [x for x in active if x not in (a, b)]
        for k in active:
            dak = dist.pop((min(a, k), max(a, k)))
            dbk = dist.pop((min(b, k), max(b, k)))
            dist[(k, next_id)] = (size[a] * dak + size[b] * dbk) / (size[a] + size[b])
        del dist[(a, b)]
        size[next_id] = size.pop(a) + size.pop(b)
        active.append(next_id)
        next_id += 1
    return tree
