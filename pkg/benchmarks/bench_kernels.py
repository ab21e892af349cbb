"""Time the SGD kernels compiled with numba against their plain-Python fallback.

Each path runs in its own interpreter because ``UMHI_DISABLE_NUMBA`` is read
at import time. The compiled path is warmed up once so compilation is not
timed. After timing, the outputs of the two paths are compared; they should
agree to floating-point round-off because both draw from the same
in-kernel generator.

    python benchmarks/bench_kernels.py            # default sizes
    python benchmarks/bench_kernels.py --small    # quick smoke run
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

SIZES = {
    "default": {"nodes": 200, "line_epochs": 10, "dim": 32, "walks": 4, "walk_len": 20, "mf_users": 120,
                "mf_epochs": 3},
    "small": {"nodes": 60, "line_epochs": 3, "dim": 8, "walks": 2, "walk_len": 10, "mf_users": 40, "mf_epochs": 2},
}


def _workloads(size: dict):
    from umhi.embed import train_line
    from umhi.embed.skipgram import train_sgns
    from umhi.embed.walks import generate_walks
    from umhi.evaluation.synth import stochastic_block_model
    from umhi.graph import UnfollowMatrix
    from umhi.mf import factorize_history

    n = size["nodes"]
    G, _ = stochastic_block_model([n // 2, n - n // 2], 0.1, 0.01, seed=0)
    rng = np.random.default_rng(0)
    m = size["mf_users"]
    R = UnfollowMatrix(m, zip(rng.integers(0, m, 4 * m).tolist(), rng.integers(0, m, 4 * m).tolist()))
    walks = generate_walks(G, size["walks"], size["walk_len"], 0.5, 2.0, seed=1)
    return {
        "line_first": lambda: train_line(G, "first", dim=size["dim"], epochs=size["line_epochs"], seed=1).vectors,
        "line_second": lambda: train_line(G, "second", dim=size["dim"], epochs=size["line_epochs"], seed=1).vectors,
        "node2vec_walks": lambda: np.concatenate([np.asarray(w) for w in
                                                  generate_walks(G, size["walks"], size["walk_len"], 0.5, 2.0,
                                                                 seed=1)]),
        "skipgram": lambda: train_sgns(walks, n, dim=size["dim"], window=5, negatives=5, epochs=1, seed=1),
        "mf_full": lambda: factorize_history(R, k=size["dim"], epochs=size["mf_epochs"], seed=1, mode="full").P,
    }


def child(size_name: str, out: str) -> None:
    from umhi._accel import NUMBA_ENABLED

    jobs = _workloads(SIZES[size_name])
    timings, arrays = {}, {}
    for name, fn in jobs.items():
        if NUMBA_ENABLED:
            fn()  # compile outside the timed call
        t0 = time.perf_counter()
        arrays[name] = np.asarray(fn(), dtype=np.float64)
        timings[name] = time.perf_counter() - t0
    np.savez(out, **arrays)
    print(json.dumps({"numba": NUMBA_ENABLED, "seconds": timings}))


def run_path(size_name: str, disable: bool, out: Path) -> dict:
    env = dict(os.environ, UMHI_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, __file__, "--child", "--size", size_name, "--out", str(out)],
                          env=env, check=True, capture_output=True, text=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--small", action="store_true", help="tiny sizes for a quick check")
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    ap.add_argument("--size", default="default", help=argparse.SUPPRESS)
    ap.add_argument("--out", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.child:
        child(args.size, args.out)
        return 0
    size = "small" if args.small else "default"
    with tempfile.TemporaryDirectory() as tmp:
        jit = run_path(size, False, Path(tmp) / "jit.npz")
        py = run_path(size, True, Path(tmp) / "py.npz")
        if not jit["numba"]:
            print("numba is not importable; both runs used the Python path")
        with np.load(Path(tmp) / "jit.npz") as a, np.load(Path(tmp) / "py.npz") as b:
            diffs = {k: float(np.max(np.abs(a[k] - b[k]), initial=0.0)) for k in a.files}
    print(f"{'kernel':<16}{'numba s':>10}{'python s':>10}{'speedup':>9}{'max |diff|':>12}")
    ok = True
    for name, t_jit in jit["seconds"].items():
        t_py = py["seconds"][name]
        print(f"{name:<16}{t_jit:>10.4f}{t_py:>10.3f}{t_py / max(t_jit, 1e-9):>8.0f}x{diffs[name]:>12.1e}")
        ok &= diffs[name] <= 1e-9
    print("outputs agree" if ok else "OUTPUTS DIFFER")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
