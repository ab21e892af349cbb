"""DeepWalk / node2vec: biased second-order random walks plus skip-gram."""

from __future__ import annotations

import numpy as np

from .._accel import make_rng_state, njit, rand_below, rand_uniform
from ..graph import TemporalGraph
from .skipgram import train_sgns
from .table import EmbeddingTable


@njit(nogil=True, cache=True)
def _is_neighbor(indptr, indices, a, b):
    lo = indptr[a]
    hi = indptr[a + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if indices[mid] < b:
            lo = mid + 1
        else:
            hi = mid
    return lo < indptr[a + 1] and indices[lo] == b


@njit(nogil=True, cache=True)
def node2vec_walks(indptr, indices, starts, walk_len, p, q, state):
    """One walk per entry of ``starts``; rows are padded with -1 after a dead end.

    The biased step is drawn by rejection: propose a uniform neighbor ``x``
    of the current node and accept with weight 1/p (x is the previous node),
    1 (x adjacent to it) or 1/q (otherwise), scaled by the largest weight.
    """
    walks = np.full((starts.shape[0], walk_len), -1, dtype=np.int64)
    uniform = p == 1.0 and q == 1.0
    w_ret = 1.0 / p
    w_out = 1.0 / q
    w_max = max(w_ret, 1.0, w_out)
    for w in range(starts.shape[0]):
        cur = starts[w]
        walks[w, 0] = cur
        prev = -1
        for t in range(1, walk_len):
            deg = indptr[cur + 1] - indptr[cur]
            if deg == 0:
                break
            if prev < 0 or uniform:
                nxt = indices[indptr[cur] + rand_below(state, deg)]
            else:
                while True:
                    x = indices[indptr[cur] + rand_below(state, deg)]
                    if x == prev:
                        weight = w_ret
                    elif _is_neighbor(indptr, indices, prev, x):
                        weight = 1.0
                    else:
                        weight = w_out
                    if rand_uniform(state) * w_max < weight:
                        nxt = x
                        break
            walks[w, t] = nxt
            prev = cur
            cur = nxt
    return walks


def generate_walks(G: TemporalGraph, walks_per_node: int = 10, walk_len: int = 40,
                   p: float = 1.0, q: float = 1.0, seed: int = 0) -> list[np.ndarray]:
    """Walks over the symmetrized graph, ``walks_per_node`` passes in shuffled node order."""
    indptr, indices = G.undirected()
    rng = np.random.default_rng(seed)
    starts = np.concatenate([rng.permutation(G.num_users) for _ in range(walks_per_node)]) \
        if walks_per_node > 0 else np.zeros(0, dtype=np.int64)
    walks = node2vec_walks(indptr, indices, starts.astype(np.int64), int(walk_len), float(p), float(q),
                           make_rng_state(seed))
    return [row[row >= 0] for row in walks]


def train_walk_embedding(
    G: TemporalGraph,
    dim: int = 100,
    walks_per_node: int = 10,
    walk_len: int = 40,
    window: int = 5,
    p: float = 1.0,
    q: float = 1.0,
    negatives: int = 5,
    epochs: int = 1,
    lr0: float = 0.025,
    seed: int = 0,
    workers: int = 1,
) -> EmbeddingTable:
    """node2vec embeddings (DeepWalk when ``p == q == 1``)."""
    if G.num_users == 0:
        raise ValueError("graph has no users")
    walks = generate_walks(G, walks_per_node, walk_len, p, q, seed)
    W = train_sgns(walks, G.num_users, dim=dim, window=window, negatives=negatives,
                   epochs=epochs, lr0=lr0, seed=seed, workers=workers)
    return EmbeddingTable(W)
