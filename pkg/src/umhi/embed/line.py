"""LINE embeddings with first- and second-order proximity."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .._accel import alias_draw, make_rng_state, njit, rand_below, sigmoid, substream_seed
from ..graph import TemporalGraph
from .alias import build_alias_table
from .table import EmbeddingTable

log = logging.getLogger(__name__)


@njit(nogil=True, cache=True)
def line_step(U, C, u, targets, lr, err):
    """One ascent step on ``log s(u.c_t0) + sum_k log s(-u.c_tk)``.

    ``targets[0]`` is the observed neighbor, the rest are noise draws;
    noise equal to the source or the neighbor is skipped. ``C`` may be
    ``U`` itself (first order).
    """
    dim = U.shape[1]
    v = targets[0]
    for d in range(dim):
        err[d] = 0.0
    for k in range(targets.shape[0]):
        t = targets[k]
        if k > 0 and (t == v or t == u):
            continue
        label = 1.0 if k == 0 else 0.0
        f = 0.0
        for d in range(dim):
            f += U[u, d] * C[t, d]
        g = (label - sigmoid(f)) * lr
        for d in range(dim):
            err[d] += g * C[t, d]
        for d in range(dim):
            C[t, d] += g * U[u, d]
    for d in range(dim):
        U[u, d] += err[d]


@njit(nogil=True, cache=True)
def line_kernel(U, C, src, dst, edge_prob, edge_alias, noise_prob, noise_alias,
                negatives, lr0, first, count, total, state):
    err = np.empty(U.shape[1])
    targets = np.empty(negatives + 1, dtype=np.int64)
    for s in range(first, first + count):
        lr = lr0 * (1.0 - 0.9 * s / total)
        e = alias_draw(edge_prob, edge_alias, state)
        targets[0] = dst[e]
        for k in range(1, negatives + 1):
            targets[k] = alias_draw(noise_prob, noise_alias, state)
        line_step(U, C, src[e], targets, lr, err)


def line_pair_objective(U, C, u, targets) -> float:
    """Objective maximized by :func:`line_step` for fixed noise draws."""
    v = targets[0]
    total = np.log(1.0 / (1.0 + np.exp(-(U[u] @ C[v]))))
    for t in targets[1:]:
        if t == v or t == u:
            continue
        total += np.log(1.0 / (1.0 + np.exp(U[u] @ C[t])))
    return float(total)


def init_vectors(n: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return (rng.random((n, dim)) - 0.5) / dim


def train_line(
    G: TemporalGraph,
    order: str = "first",
    dim: int = 100,
    epochs: int = 100,
    negatives: int = 5,
    lr0: float = 0.025,
    seed: int = 0,
    workers: int = 1,
) -> EmbeddingTable:
    """Train LINE vertex embeddings.

    ``order="first"`` uses one table and treats follow edges as undirected;
    ``order="second"`` keeps separate context vectors and edge direction.
    One epoch is ``G.num_edges`` edge samples; the learning rate decays
    linearly from ``lr0`` to ``lr0 / 10``. With ``workers > 1`` threads
    update the tables without locks, so results are not bit-reproducible.
    """
    if order not in ("first", "second"):
        raise ValueError("order must be 'first' or 'second'")
    if G.num_edges == 0:
        raise ValueError("LINE needs at least one edge")
    n = G.num_users
    U = init_vectors(n, dim, seed)
    if order == "first":
        und = np.concatenate([G.edges, G.edges[:, ::-1]])
        und = np.unique(und, axis=0)
        src, dst = und[:, 0].copy(), und[:, 1].copy()
        C = U
        noise_weight = np.bincount(src, minlength=n).astype(float) ** 0.75
    else:
        src, dst = G.edges[:, 0].copy(), G.edges[:, 1].copy()
        C = np.zeros((n, dim))
        noise_weight = G.in_degree().astype(float) ** 0.75
    total = int(epochs) * G.num_edges
    if total == 0:
        return EmbeddingTable(U)
    edges = build_alias_table(np.ones(len(src)))
    noise = build_alias_table(noise_weight)
    args = (U, C, src, dst, edges.prob, edges.alias, noise.prob, noise.alias, int(negatives), float(lr0))
    workers = max(1, int(workers))
    if workers == 1:
        line_kernel(*args, 0, total, total, make_rng_state(seed))
    else:
        bounds = np.linspace(0, total, workers + 1).astype(np.int64)
        with ThreadPoolExecutor(workers) as pool:
            jobs = [
                pool.submit(line_kernel, *args, int(bounds[w]), int(bounds[w + 1] - bounds[w]), total,
                            make_rng_state(substream_seed(seed, f"line-worker-{w}")))
                for w in range(workers)
            ]
            for job in jobs:
                job.result()
    if not np.all(np.isfinite(U)):
        raise FloatingPointError("LINE training diverged")
    return EmbeddingTable(U)
