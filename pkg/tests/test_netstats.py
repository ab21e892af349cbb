import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from umhi.graph import EvalSet, Post, TemporalGraph
from umhi.netstats import (HOLE, LEADER, ORDINARY, CorpusIdf, PageRankConvergenceWarning, RouTable,
                           TfidfIndex, UndefinedValueError, assign_roles, burt_constraint, content_similarity,
                           exposure, pagerank, rou, rou_curve)

from conftest import random_digraph
from oracles import dense_pagerank, tfidf_cosine, triple_loop_constraint


def test_pagerank_cycle_and_dyad():
    assert np.allclose(pagerank(TemporalGraph(3, [(0, 1), (1, 2), (2, 0)])), 1 / 3, atol=1e-12)
    assert np.allclose(pagerank(TemporalGraph(2, [(0, 1), (1, 0)])), 0.5, atol=1e-12)


def test_pagerank_star_matches_dense_oracle():
    edges = [(k, 0) for k in range(1, 6)]
    pr = pagerank(TemporalGraph(6, edges))
    ref = dense_pagerank(6, edges)
    assert abs(pr[0] - ref[0]) < 1e-9 and pr[0] == pr.max()


def test_pagerank_nonconvergence_warns():
    G = TemporalGraph(4, [(0, 1), (1, 2), (2, 3)])
    with pytest.warns(PageRankConvergenceWarning):
        pr = pagerank(G, max_iter=2)
    assert abs(pr.sum() - 1) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 40), st.floats(0.0, 0.3))
def test_pagerank_property_sum_and_oracle(seed, n, p):
    G = random_digraph(np.random.default_rng(seed), n, p)
    pr = pagerank(G)
    assert abs(pr.sum() - 1) < 1e-9
    assert np.max(np.abs(pr - dense_pagerank(n, G.edges.tolist()))) < 1e-9


def test_constraint_examples():
    assert burt_constraint(TemporalGraph(2, [(0, 1)])).tolist() == [1.0, 1.0]
    triad = burt_constraint(TemporalGraph(3, [(0, 1), (1, 2), (2, 0)]))
    assert np.allclose(triad, 1.125, atol=1e-15)
    star = burt_constraint(TemporalGraph(5, [(0, k) for k in range(1, 5)]))
    assert star[0] == pytest.approx(0.25, abs=1e-15)
    assert math.isinf(burt_constraint(TemporalGraph(3, [(0, 1)]))[2])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(2, 25))
def test_constraint_matches_triple_loop(seed, n):
    G = random_digraph(np.random.default_rng(seed), n, 0.2)
    got, ref = burt_constraint(G), triple_loop_constraint(n, G.edges.tolist())
    finite = np.isfinite(ref)
    assert np.array_equal(np.isfinite(got), finite)
    assert np.allclose(got[finite], ref[finite], rtol=1e-12, atol=1e-14)


def test_roles_counts_and_precedence():
    rng = np.random.default_rng(0)
    roles = assign_roles(rng.random(20), rng.random(20))
    assert (roles == LEADER).sum() == 1 and (roles == HOLE).sum() == 1
    pr = np.array([0.9, 0.1, 0.2, 0.3] + [0.0] * 16)
    cs = np.array([0.01, 0.5, 0.02, 0.9] + [1.0] * 16)
    roles = assign_roles(pr, cs)
    assert roles[0] == LEADER and roles[2] == HOLE
    assert assign_roles([1.0], [1.0]).tolist() == [LEADER]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 60), st.floats(0.01, 100), st.floats(-5, 5))
def test_roles_invariant_to_monotone_rescaling(seed, n, scale, shift):
    rng = np.random.default_rng(seed)
    pr, cs = rng.random(n), rng.random(n)
    assert np.array_equal(assign_roles(pr, cs), assign_roles(scale * pr + shift, np.exp(cs) * scale))


def _posts(user, *texts, times=None):
    times = times or [1] * len(texts)
    return [Post(user, t, text) for t, text in zip(times, texts)]


def test_similarity_examples():
    a, b, c = _posts(0, "x y z"), _posts(1, "x y z"), _posts(2, "p q")
    idf = CorpusIdf([["x", "y", "z"], ["x", "y", "z"], ["p", "q"]])
    assert content_similarity(a, b, idf) == pytest.approx(1.0, abs=1e-12)
    assert content_similarity(a, c, idf) == 0.0


def test_similarity_matches_hand_oracle():
    docs = [["a", "b"], ["a", "c"]]
    idf = CorpusIdf(docs)
    got = content_similarity(_posts(0, "a b"), _posts(1, "a c"), idf)
    # idf(a) = ln(3/3) + 1 = 1, idf(b) = idf(c) = ln(3/2) + 1
    w = math.log(1.5) + 1
    assert abs(got - 1 / (1 + w * w)) < 1e-12
    assert abs(got - tfidf_cosine(*docs, docs)) < 1e-12


def test_tfidf_index_agrees_with_scalar_path():
    posts = [_posts(0, "a b a"), _posts(1, "a c"), _posts(2, "d"), _posts(3, "b c d a")]
    index = TfidfIndex(posts)
    for i in range(4):
        for j in range(4):
            ref = content_similarity(posts[i], posts[j], index.idf)
            assert abs(index.similarity(i, j)[0] - ref) < 1e-12
            assert abs(index.similarity(i, j)[0] - index.similarity(j, i)[0]) < 1e-15


def test_exposure_closed_window():
    assert exposure(_posts(0, "a", "b", "c", times=[1, 2, 3]), (0, 10)) == 3
    assert exposure([], (0, 10)) == 0
    assert exposure(_posts(0, "a", "b", times=[10, 11]), (0, 10)) == 1


def test_rou_examples():
    assert rou([0] * 5) == 0.0
    assert rou([1] * 5) == 1.0
    assert rou([1] * 6790 + [0] * 5802) == pytest.approx(0.5392, abs=5e-5)
    with pytest.raises(UndefinedValueError):
        rou([])


def _eval(rng, n_pairs, n_users):
    return EvalSet(rng.integers(0, n_users, n_pairs), rng.integers(0, n_users, n_pairs),
                   rng.integers(0, 2, n_pairs))


def test_rou_curve_all_hold_and_partition(rng):
    E = _eval(rng, 300, 30)
    E.label[:] = 0
    roles = rng.integers(0, 3, 30)
    table = rou_curve(E, rng.random(300), roles, bins=5)
    assert all(r.rou == 0 for r in table.rows)
    assert sum(r.n for r in table.rows) == 300


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 12), st.integers(1, 40))
def test_rou_curve_rows_recombine(seed, bins, min_count):
    rng = np.random.default_rng(seed)
    E = _eval(rng, 250, 25)
    roles = rng.integers(0, 3, 25)
    vals = np.round(rng.exponential(size=250), 1)
    table = rou_curve(E, vals, roles, bins=bins, min_count=min_count)
    assert sum(r.n_unfollow for r in table.rows) == E.label.sum()
    assert sum(r.n for r in table.rows) == len(E)
    for role in (ORDINARY, LEADER, HOLE):
        rows = table.for_role(role)
        assert sum(r.n for r in rows) == int((roles[E.followee] == role).sum())
        if len(rows) > 1:
            assert all(r.n >= min_count for r in rows)
            assert all(a.hi <= b.lo + 1e-12 for a, b in zip(rows, rows[1:]))


def test_rou_table_tsv_roundtrip(rng):
    E = _eval(rng, 200, 20)
    table = rou_curve(E, rng.random(200), rng.integers(0, 3, 20), bins=4, condition="similarity")
    text = table.to_tsv()
    assert text.splitlines()[0] == "condition_lo\tcondition_hi\trole\tn_unfollow\tn_hold\trou"
    back = RouTable.from_tsv(text)
    assert [(r.role, r.n_unfollow, r.n_hold) for r in back.rows] == [(r.role, r.n_unfollow, r.n_hold) for r in table.rows]
