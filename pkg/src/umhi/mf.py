"""Matrix factorization of the (masked) unfollow history matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._accel import make_rng_state, njit, rand_below
from .graph import UnfollowMatrix

log = logging.getLogger(__name__)

FULL_SUM_LIMIT = 5000
ZEROS_PER_POSITIVE = 10


@dataclass
class FactorModel:
    P: np.ndarray  # follower factors, |V| x k
    Q: np.ndarray  # followee factors, |V| x k
    lam: float = 0.01
    epochs: int = 0
    seed: int = 0
    mode: str = "full"

    @property
    def k(self) -> int:
        return self.P.shape[1]

    def score(self, i: int, j: int) -> float:
        return mf_score(self, i, j)


@njit(nogil=True, cache=True)
def _sgd_entry(P, Q, i, j, r, lr, lam):
    k = P.shape[1]
    e = r
    for d in range(k):
        e -= P[i, d] * Q[j, d]
    for d in range(k):
        p = P[i, d]
        q = Q[j, d]
        P[i, d] = p + lr * (e * q - lam * p)
        Q[j, d] = q + lr * (e * p - lam * q)


@njit(nogil=True, cache=True)
def mf_full_epoch(P, Q, R, perm, lr, lam, state):
    """One pass over every entry of dense ``R`` in a freshly shuffled order."""
    n_cols = R.shape[1]
    for a in range(perm.shape[0] - 1, 0, -1):
        b = rand_below(state, a + 1)
        tmp = perm[a]
        perm[a] = perm[b]
        perm[b] = tmp
    for idx in perm:
        i = idx // n_cols
        j = idx % n_cols
        _sgd_entry(P, Q, i, j, float(R[i, j]), lr, lam)


@njit(nogil=True, cache=True)
def _is_positive(indptr, indices, i, j):
    lo = indptr[i]
    hi = indptr[i + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if indices[mid] < j:
            lo = mid + 1
        else:
            hi = mid
    return lo < indptr[i + 1] and indices[lo] == j


@njit(nogil=True, cache=True)
def mf_sampled_epoch(P, Q, pos_i, pos_j, indptr, indices, zeros_per_pos, lr, lam, state):
    """Every positive once plus ``zeros_per_pos`` uniformly drawn zero entries each."""
    n = P.shape[0]
    m = Q.shape[0]
    n_pos = pos_i.shape[0]
    total = n_pos * (1 + zeros_per_pos)
    for _ in range(total):
        if rand_below(state, 1 + zeros_per_pos) == 0:
            s = rand_below(state, n_pos)
            _sgd_entry(P, Q, pos_i[s], pos_j[s], 1.0, lr, lam)
        else:
            while True:
                i = rand_below(state, n)
                j = rand_below(state, m)
                if not _is_positive(indptr, indices, i, j):
                    break
            _sgd_entry(P, Q, i, j, 0.0, lr, lam)


def init_factors(n: int, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    hi = 1.0 / np.sqrt(k)
    return rng.uniform(0.0, hi, (n, k)), rng.uniform(0.0, hi, (n, k))


def objective(R: np.ndarray, P: np.ndarray, Q: np.ndarray, lam: float) -> float:
    """Full regularized squared error over all |V| x |V| entries."""
    resid = R - P @ Q.T
    n_rows, n_cols = R.shape
    return float((resid * resid).sum() + lam * (n_cols * (P * P).sum() + n_rows * (Q * Q).sum()))


def factorize_history(
    R_train: UnfollowMatrix,
    k: int = 64,
    lam: float = 0.01,
    lr: float = 0.01,
    epochs: int = 100,
    seed: int = 0,
    mode: str | None = None,
    loss_history: list | None = None,
) -> FactorModel:
    """SGD on ``sum_ij (r_ij - p_i.q_j)^2 + lam (|p_i|^2 + |q_j|^2)``.

    Each entry step moves along half the entry's negative gradient
    (``p += lr (e q - lam p)``). ``mode="full"`` visits every entry each
    epoch and is the default up to 5000 users; ``"sampled"`` visits the
    positives plus ten uniform zeros per positive. ``loss_history`` (full
    mode only) receives the objective after every epoch.
    """
    n = R_train.num_users
    if mode is None:
        mode = "full" if n <= FULL_SUM_LIMIT else "sampled"
        if mode == "sampled":
            log.warning("history matrix has %d users; sampling %d zeros per positive instead of the full sum",
                        n, ZEROS_PER_POSITIVE)
    P, Q = init_factors(n, k, seed)
    state = make_rng_state(seed)
    if mode == "full":
        R = R_train.to_dense().astype(np.uint8)
        perm = np.arange(n * n, dtype=np.int64)
        for _ in range(epochs):
            mf_full_epoch(P, Q, R, perm, float(lr), float(lam), state)
            if loss_history is not None:
                loss_history.append(objective(R.astype(float), P, Q, lam))
    elif mode == "sampled":
        csr = R_train.to_csr()
        csr.sort_indices()
        coo = csr.tocoo()
        pos_i, pos_j = coo.row.astype(np.int64), coo.col.astype(np.int64)
        if len(pos_i):
            for _ in range(epochs):
                mf_sampled_epoch(P, Q, pos_i, pos_j, csr.indptr.astype(np.int64), csr.indices.astype(np.int64),
                                 ZEROS_PER_POSITIVE, float(lr), float(lam), state)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Q))):
        raise FloatingPointError("factorization diverged")
    return FactorModel(P, Q, lam, epochs, seed, mode)


def mf_score(model: FactorModel, i: int, j: int) -> float:
    n = model.P.shape[0]
    if not (0 <= i < n and 0 <= j < model.Q.shape[0]):
        raise IndexError(f"user id out of range: ({i}, {j})")
    return float(model.P[i] @ model.Q[j])
