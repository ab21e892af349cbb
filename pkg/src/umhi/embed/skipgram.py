"""Skip-gram with negative sampling over integer sequences (walks or sentences)."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .._accel import alias_draw, make_rng_state, njit, rand_below, substream_seed
from .alias import build_alias_table
from .line import init_vectors, line_step


@njit(nogil=True, cache=True)
def sgns_kernel(W, C, tokens, offsets, s_first, s_last, window, noise_prob, noise_alias,
                negatives, lr0, epochs, state):
    n_tok = offsets[s_last] - offsets[s_first]
    total = max(1, epochs * n_tok)
    floor = lr0 * 1e-4
    err = np.empty(W.shape[1])
    targets = np.empty(negatives + 1, dtype=np.int64)
    seen = 0
    for _ in range(epochs):
        for s in range(s_first, s_last):
            a = offsets[s]
            b = offsets[s + 1]
            for pos in range(a, b):
                lr = lr0 * (1.0 - seen / total)
                if lr < floor:
                    lr = floor
                seen += 1
                shrink = rand_below(state, window)
                lo = max(a, pos - window + shrink)
                hi = min(b, pos + window - shrink + 1)
                for cpos in range(lo, hi):
                    if cpos == pos:
                        continue
                    targets[0] = tokens[cpos]
                    for k in range(1, negatives + 1):
                        targets[k] = alias_draw(noise_prob, noise_alias, state)
                    line_step(W, C, tokens[pos], targets, lr, err)


def flatten(sequences: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    offsets = np.zeros(len(sequences) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    tokens = np.fromiter((t for s in sequences for t in s), dtype=np.int64, count=int(offsets[-1]))
    return tokens, offsets


def train_sgns(
    sequences: Sequence[Sequence[int]],
    n_items: int,
    dim: int = 100,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    lr0: float = 0.025,
    seed: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """Input vectors for items ``0..n_items-1``; noise distribution is count^0.75."""
    tokens, offsets = flatten(sequences)
    W = init_vectors(n_items, dim, seed)
    if epochs <= 0 or len(tokens) == 0:
        return W
    C = np.zeros((n_items, dim))
    counts = np.bincount(tokens, minlength=n_items).astype(float)
    noise = build_alias_table(counts ** 0.75)
    args = (W, C, tokens, offsets)
    tail = (int(window), noise.prob, noise.alias, int(negatives), float(lr0), int(epochs))
    n_seq = len(offsets) - 1
    workers = max(1, min(int(workers), n_seq))
    if workers == 1:
        sgns_kernel(*args, 0, n_seq, *tail, make_rng_state(seed))
    else:
        bounds = np.linspace(0, n_seq, workers + 1).astype(np.int64)
        with ThreadPoolExecutor(workers) as pool:
            jobs = [
                pool.submit(sgns_kernel, *args, int(bounds[w]), int(bounds[w + 1]), *tail,
                            make_rng_state(substream_seed(seed, f"sgns-worker-{w}")))
                for w in range(workers)
            ]
            for job in jobs:
                job.result()
    if not np.all(np.isfinite(W)):
        raise FloatingPointError("skip-gram training diverged")
    return W
