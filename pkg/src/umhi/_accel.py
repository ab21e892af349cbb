"""Optional numba acceleration for the SGD kernels.

Set ``UMHI_DISABLE_NUMBA=1`` to run every kernel as plain Python. Kernels
draw their randomness from :func:`rand_uniform`, a combined multiplicative
congruential generator written in int64-safe arithmetic, so both paths
produce bit-identical results for the same seed.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

_DISABLED = os.environ.get("UMHI_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    import numba as _numba
except ImportError:  # pragma: no cover - exercised via the env flag in CI
    _numba = None

NUMBA_ENABLED = _numba is not None


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if _numba is not None:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def python_impl(fn):
    """Return the uncompiled Python function behind a kernel."""
    return getattr(fn, "py_func", fn)


_M1 = 2147483563
_M2 = 2147483399


def make_rng_state(seed: int) -> np.ndarray:
    """Two-word generator state derived from an arbitrary integer seed."""
    digest = hashlib.sha256(str(int(seed)).encode()).digest()
    a = int.from_bytes(digest[:8], "little") % (_M1 - 1) + 1
    b = int.from_bytes(digest[8:16], "little") % (_M2 - 1) + 1
    return np.array([a, b], dtype=np.int64)


@njit(nogil=True)
def rand_uniform(state):
    """Uniform draw in (0, 1); advances ``state`` in place."""
    s1 = (40014 * state[0]) % 2147483563
    s2 = (40692 * state[1]) % 2147483399
    state[0] = s1
    state[1] = s2
    z = s1 - s2
    if z < 1:
        z += 2147483562
    return z * 4.656613057391769e-10


@njit(nogil=True)
def rand_below(state, n):
    k = int(rand_uniform(state) * n)
    if k >= n:
        k = n - 1
    return k


@njit(nogil=True)
def alias_draw(prob, alias, state):
    k = rand_below(state, prob.shape[0])
    if rand_uniform(state) < prob[k]:
        return k
    return alias[k]


@njit(nogil=True)
def sigmoid(x):
    if x > 30.0:
        return 1.0
    if x < -30.0:
        return 0.0
    return 1.0 / (1.0 + np.exp(-x))


def substream_seed(master: int, name: str) -> int:
    """Stable per-stage seed so stages never share or perturb draws."""
    digest = hashlib.sha256(f"{int(master)}/{name}".encode()).digest()
    return int.from_bytes(digest[:4], "little")
