import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from umhi.embed import (EmbeddingTable, build_alias_table, read_embeddings, train_line, train_walk_embedding,
                        write_embeddings)
from umhi.embed.line import init_vectors, line_pair_objective, line_step
from umhi.embed.table import block_cosine_gap
from umhi.embed.walks import generate_walks
from umhi.evaluation.synth import stochastic_block_model
from umhi.graph import TemporalGraph


def test_alias_uniform_and_skewed():
    assert np.allclose(build_alias_table([1, 1, 1, 1]).probabilities(), 0.25, atol=1e-15)
    assert np.allclose(build_alias_table([1, 3]).probabilities(), [0.25, 0.75], atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=16).filter(lambda w: sum(w) > 0))
def test_alias_exact_accounting(weights):
    table = build_alias_table(weights)
    w = np.asarray(weights)
    assert np.all((table.prob >= 0) & (table.prob <= 1))
    assert np.allclose(table.probabilities(), w / w.sum(), atol=1e-12)


def test_alias_monte_carlo():
    draws = build_alias_table([1, 3]).sample(10 ** 6, np.random.default_rng(0))
    freq = np.bincount(draws, minlength=2) / 1e6
    assert np.all(np.abs(freq - [0.25, 0.75]) < 0.005)


@pytest.mark.parametrize("bad", [[], [0, 0], [1, -1], [np.nan]])
def test_alias_rejects_bad_weights(bad):
    with pytest.raises(ValueError):
        build_alias_table(bad)


def test_line_step_is_objective_gradient():
    rng = np.random.default_rng(3)
    U = rng.normal(scale=0.3, size=(8, 6))
    C = rng.normal(scale=0.3, size=(8, 6))
    u, targets, lr = 1, np.array([4, 2, 6, 7], dtype=np.int64), 1e-3
    U2, C2 = U.copy(), C.copy()
    line_step(U2, C2, u, targets, lr, np.empty(6))
    h = 1e-6

    def fd(mat, row, d):
        plus, minus = mat.copy(), mat.copy()
        plus[row, d] += h
        minus[row, d] -= h
        args = (plus, C) if mat is U else (U, plus)
        margs = (minus, C) if mat is U else (U, minus)
        return (line_pair_objective(*args, u, targets) - line_pair_objective(*margs, u, targets)) / (2 * h)

    for d in range(6):
        g = fd(U, u, d)
        assert abs((U2[u, d] - U[u, d]) / lr - g) <= 1e-4 * max(1.0, abs(g))
        for t in targets:
            g = fd(C, t, d)
            assert abs((C2[t, d] - C[t, d]) / lr - g) <= 1e-4 * max(1.0, abs(g))


def test_line_zero_epochs_returns_init():
    G = TemporalGraph(5, [(0, 1), (1, 2)])
    assert np.array_equal(train_line(G, "first", dim=8, epochs=0, seed=4).vectors, init_vectors(5, 8, 4))


def test_line_single_edge_pulls_pair_together():
    G = TemporalGraph(2, [(0, 1)])
    table = train_line(G, "first", dim=8, epochs=2000, seed=1)
    assert table.cosine(0, 1) > 0.5


def test_line_rejects_empty_graph_and_bad_order():
    with pytest.raises(ValueError):
        train_line(TemporalGraph(3, np.empty((0, 2))))
    with pytest.raises(ValueError):
        train_line(TemporalGraph(2, [(0, 1)]), order="third")


@pytest.mark.parametrize("order", ["first", "second"])
def test_line_deterministic_and_finite(order):
    G, _ = stochastic_block_model([30, 30], 0.2, 0.02, seed=2)
    a = train_line(G, order, dim=16, epochs=20, seed=5).vectors
    b = train_line(G, order, dim=16, epochs=20, seed=5).vectors
    assert np.array_equal(a, b) and np.all(np.isfinite(a))


def test_line_multiworker_runs():
    G, blocks = stochastic_block_model([40, 40], 0.2, 0.01, seed=2)
    table = train_line(G, "first", dim=16, epochs=50, seed=5, workers=2)
    assert np.all(np.isfinite(table.vectors)) and block_cosine_gap(table.vectors, blocks) > 0.1


def test_walks_stay_on_edges_and_pad():
    G = TemporalGraph(5, [(0, 1), (1, 2), (2, 0)])
    walks = generate_walks(G, walks_per_node=3, walk_len=6, p=0.5, q=2.0, seed=1)
    indptr, indices = G.undirected()
    nb = {i: set(indices[indptr[i]:indptr[i + 1]].tolist()) for i in range(5)}
    for w in walks:
        assert len(w) >= 1
        for a, b in zip(w, w[1:]):
            assert b in nb[a]
    assert all(len(w) == 1 for w in walks if w[0] in (3, 4))


def test_deepwalk_recovers_blocks_and_isolated_node_untouched():
    G, blocks = stochastic_block_model([100, 100], 0.1, 0.01, seed=4)
    iso = TemporalGraph(201, G.edges)
    table = train_walk_embedding(iso, seed=3)
    assert block_cosine_gap(table.vectors[:200], blocks) > 0.2
    again = train_walk_embedding(iso, seed=3)
    assert np.array_equal(table.vectors, again.vectors)
    fresh = train_walk_embedding(TemporalGraph(201, np.empty((0, 2))), seed=3, epochs=0)
    assert np.array_equal(table.vectors[200], fresh.vectors[200])


def test_embedding_file_roundtrip(tmp_path):
    t = EmbeddingTable(np.random.default_rng(0).normal(size=(4, 3)))
    write_embeddings(tmp_path / "e.emb", t)
    assert (tmp_path / "e.emb").read_text().splitlines()[0] == "4 3"
    back = read_embeddings(tmp_path / "e.emb", dense_ids=True)
    assert np.array_equal(back.vectors, t.vectors)
    named = EmbeddingTable(t.vectors, ["a", "b", "c", "d"])
    write_embeddings(tmp_path / "n.emb", named)
    back = read_embeddings(tmp_path / "n.emb")
    assert back.ids == ["a", "b", "c", "d"] and np.array_equal(back["c"], t.vectors[2])
    assert np.array_equal(back.lookup("zz"), np.zeros(3))


_FALLBACK_SCRIPT = textwrap.dedent("""
    import sys, numpy as np
    from umhi._accel import NUMBA_ENABLED
    from umhi.embed import train_line, train_walk_embedding
    from umhi.evaluation.synth import stochastic_block_model
    from umhi.graph import UnfollowMatrix
    from umhi.mf import factorize_history
    G, _ = stochastic_block_model([15, 15], 0.3, 0.05, seed=1)
    R = UnfollowMatrix(30, [(0, 1), (2, 5), (7, 3), (9, 9)])
    out = {"numba": np.array([NUMBA_ENABLED]),
           "line1": train_line(G, "first", dim=8, epochs=5, seed=1).vectors,
           "line2": train_line(G, "second", dim=8, epochs=5, seed=1).vectors,
           "walk": train_walk_embedding(G, dim=8, walks_per_node=2, walk_len=8, p=0.5, q=2.0, seed=1).vectors,
           "mf": factorize_history(R, k=4, epochs=3, seed=1).P,
           "mf_sampled": factorize_history(R, k=4, epochs=3, seed=1, mode="sampled").P}
    np.savez(sys.argv[1], **out)
""")


def _run_kernels(tmp_path, disable: bool) -> dict:
    out = tmp_path / ("py.npz" if disable else "jit.npz")
    env = dict(os.environ, UMHI_DISABLE_NUMBA="1" if disable else "0")
    subprocess.run([sys.executable, "-c", _FALLBACK_SCRIPT, str(out)], check=True, env=env)
    with np.load(out) as z:
        return {k: z[k] for k in z.files}


def test_python_fallback_matches_numba(tmp_path):
    jit, py = _run_kernels(tmp_path, False), _run_kernels(tmp_path, True)
    assert bool(jit.pop("numba")[0]) and not bool(py.pop("numba")[0])
    for key in jit:
        np.testing.assert_allclose(py[key], jit[key], rtol=1e-9, atol=1e-12, err_msg=key)
