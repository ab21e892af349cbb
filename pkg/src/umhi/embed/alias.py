"""Walker/Vose alias tables for O(1) discrete sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AliasTable:
    prob: np.ndarray
    alias: np.ndarray

    @property
    def n(self) -> int:
        return len(self.prob)

    def probabilities(self) -> np.ndarray:
        """Exact outcome distribution implied by the table."""
        p = self.prob / self.n
        extra = (1.0 - self.prob) / self.n
        return p + np.bincount(self.alias, weights=extra, minlength=self.n)

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        k = rng.integers(0, self.n, size=size)
        take_alias = rng.random(size=size) >= self.prob[k]
        return np.where(take_alias, self.alias[k], k)


def build_alias_table(weights) -> AliasTable:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or len(w) == 0:
        raise ValueError("weights must be a non-empty vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("at least one weight must be positive")
    n = len(w)
    scaled = w * (n / total)
    prob = np.ones(n)
    alias = np.arange(n, dtype=np.int64)
    small = [k for k in range(n) if scaled[k] < 1.0]
    large = [k for k in range(n) if scaled[k] >= 1.0]
    while small and large:
        s, l = small.pop(), large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = scaled[l] + scaled[s] - 1.0
        (small if scaled[l] < 1.0 else large).append(l)
    # leftovers are 1 up to rounding
    for k in small + large:
        prob[k] = 1.0
        alias[k] = k
    return AliasTable(prob, alias)
