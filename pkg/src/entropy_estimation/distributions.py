"""Ground-truth categorical distributions and samplers.

Randomness
----------
Every sampler takes a 64-bit integer seed and builds a fresh
``numpy.random.Generator(PCG64)`` from it, so results depend only on the
seed value.  Seeds for individual trials are derived from a base seed with
:func:`derive_seed`, which feeds ``[base_seed, *keys]`` through
``numpy.random.SeedSequence`` and takes the first 64 bits of its output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "CategoricalDistribution",
    "Histogram",
    "derive_seed",
    "rng_from_seed",
    "true_entropy",
    "sample_dirichlet_symmetric",
    "zipfian",
    "from_counts",
    "truncate_top",
    "draw_histogram",
]

_SEED_MASK = (1 << 64) - 1


def derive_seed(base_seed: int, *keys: int) -> int:
    """Mix integer ``keys`` into ``base_seed``; returns a 64-bit seed."""
    entropy = [int(base_seed) & _SEED_MASK, *(int(k) & _SEED_MASK for k in keys)]
    words = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & _SEED_MASK))


@dataclass(frozen=True)
class CategoricalDistribution:
    """A finite probability vector with optional class labels."""

    probabilities: np.ndarray
    labels: Optional[tuple] = None

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("a distribution needs at least one class")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != p.size:
                raise ValueError("labels and probabilities differ in length")
            object.__setattr__(self, "labels", labels)

    @property
    def support_size(self) -> int:
        return int(self.probabilities.size)


@dataclass(frozen=True)
class Histogram:
    """Observed class counts plus the declared support size ``K``.

    ``support_size`` defaults to the length of ``counts``; it may be larger
    when classes are known to exist but are absent from ``counts``.
    """

    counts: np.ndarray
    support_size: int = field(default=None)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise ValueError("counts must be one-dimensional")
        if c.size and (not np.issubdtype(c.dtype, np.integer)):
            if np.any(c != np.round(c)):
                raise ValueError("counts must be integers")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        k = c.size if self.support_size is None else int(self.support_size)
        if k < int(np.count_nonzero(c)):
            raise ValueError(
                f"support_size {k} is smaller than the {np.count_nonzero(c)} observed classes"
            )
        object.__setattr__(self, "support_size", k)

    @property
    def sample_size(self) -> int:
        return int(self.counts.sum())

    @property
    def observed(self) -> np.ndarray:
        """The nonzero counts."""
        return self.counts[self.counts > 0]

    @property
    def singletons(self) -> int:
        return int(np.count_nonzero(self.counts == 1))

    @classmethod
    def from_samples(cls, samples: Sequence[int], support_size: int) -> "Histogram":
        counts = np.bincount(np.asarray(samples, dtype=np.int64), minlength=support_size)
        return cls(counts, support_size)


def true_entropy(dist: CategoricalDistribution) -> float:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    p = dist.probabilities
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def sample_dirichlet_symmetric(K: int, alpha: float, seed: int) -> CategoricalDistribution:
    """Draw from Dirichlet(alpha, ..., alpha) via normalized Gamma variates."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if K == 1:
        return CategoricalDistribution(np.ones(1))
    rng = rng_from_seed(seed)
    g = rng.standard_gamma(alpha, size=K)
    total = g.sum()
    if total == 0.0:
        # every variate underflowed (tiny alpha); the limit is a point mass
        g = np.zeros(K)
        g[rng.integers(K)] = 1.0
        total = 1.0
    p = g / total
    p /= p.sum()
    return CategoricalDistribution(p)


def zipfian(K: int, exponent: float = 1.0) -> CategoricalDistribution:
    """Finite Zipf law: p_k proportional to k**-exponent for ranks 1..K."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if not exponent > 0:
        raise ValueError("exponent must be > 0")
    w = np.arange(1, K + 1, dtype=float) ** -float(exponent)
    p = w / w.sum()
    p /= p.sum()
    return CategoricalDistribution(p)


def from_counts(counts: Mapping[str, int]) -> CategoricalDistribution:
    """Renormalize observed counts into a distribution, dropping zeros."""
    if any(int(c) < 0 for c in counts.values()):
        raise ValueError("counts must be non-negative")
    items = [(label, int(c)) for label, c in counts.items() if int(c) > 0]
    if not items:
        raise ValueError("from_counts needs at least one positive count")
    labels = tuple(label for label, _ in items)
    c = np.array([n for _, n in items], dtype=float)
    p = c / c.sum()
    p /= p.sum()
    return CategoricalDistribution(p, labels)


def truncate_top(counts: Mapping[str, int], top: Optional[int]) -> dict:
    """Keep the ``top`` most frequent classes (ties broken by label)."""
    if top is None:
        return dict(counts)
    if top < 1:
        raise ValueError("top must be >= 1")
    ranked = sorted(counts.items(), key=lambda kv: (-int(kv[1]), str(kv[0])))
    return dict(ranked[:top])


def draw_histogram(dist: CategoricalDistribution, N: int, seed: int) -> Histogram:
    """Multinomial(N, p) counts; ``support_size`` is the distribution's K."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = rng_from_seed(seed)
    counts = rng.multinomial(int(N), dist.probabilities)
    return Histogram(counts, dist.support_size)
