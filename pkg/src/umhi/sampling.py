"""Balanced mini-batch sampling and validation splits."""

from __future__ import annotations

import numpy as np


class EmptyClassError(ValueError):
    pass


def split_validation(labels, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Stratified (train, validation) index split; validation gets ``fraction`` of each class."""
    labels = np.asarray(labels)
    tr, va = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_va = int(round(fraction * len(idx))) if len(idx) > 1 else 0
        va.append(idx[:n_va])
        tr.append(idx[n_va:])
    return np.sort(np.concatenate(tr)), np.sort(np.concatenate(va))


class BalancedSampler:
    """Batches of ``batch // 2`` positives and ``batch - batch // 2`` negatives, with replacement."""

    def __init__(self, labels, batch: int, rng: np.random.Generator):
        labels = np.asarray(labels)
        self.pos = np.flatnonzero(labels == 1)
        self.neg = np.flatnonzero(labels == 0)
        if len(self.pos) == 0 or len(self.neg) == 0:
            raise EmptyClassError("both classes need at least one training pair")
        self.n_pos = batch // 2
        self.n_neg = batch - self.n_pos
        self.rng = rng

    def draw(self) -> np.ndarray:
        return np.concatenate([
            self.pos[self.rng.integers(0, len(self.pos), self.n_pos)],
            self.neg[self.rng.integers(0, len(self.neg), self.n_neg)],
        ])
