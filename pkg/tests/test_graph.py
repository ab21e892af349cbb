import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from umhi.graph import (HOLD, PUBLISHED_HOLD_RATIO, UNFOLLOW, EvalSet, IngestStats, ParseError, Post,
                        RelationRecord, TemporalGraph, UnfollowMatrix, UserIndex, build_balanced_eval_set,
                        build_unfollow_matrix, fold_sizes, ingest_posts, ingest_relations, kfold_split,
                        mask_test_edges)

from conftest import write_lines


def test_relation_line_maps_to_hold_record(tmp_path):
    p = write_lines(tmp_path / "r.tsv", ["u1\tu2\t100\t-"])
    [rec] = ingest_relations(p, (0, 1000))
    assert (rec.follower, rec.followee, rec.label, rec.first_seen, rec.dissolved_at) == (0, 1, HOLD, 100, None)


def test_dissolution_inside_window_is_unfollow(tmp_path):
    p = write_lines(tmp_path / "r.tsv", ["a\tb\t1\t50", "a\tc\t1\t5000", "# comment", "b\tc\t1\t1000"])
    recs = ingest_relations(p, (10, 1000))
    assert [r.label for r in recs] == [UNFOLLOW, HOLD, UNFOLLOW]


def test_empty_relations_file(tmp_path):
    p = write_lines(tmp_path / "r.tsv", [])
    assert ingest_relations(p, (0, 1)) == []


def test_short_line_reports_line_number(tmp_path):
    p = write_lines(tmp_path / "r.tsv", ["u1\tu2"])
    with pytest.raises(ParseError) as err:
        ingest_relations(p, (0, 1))
    assert err.value.lineno == 1


def test_self_loop_rejected_and_counted(tmp_path, caplog):
    p = write_lines(tmp_path / "r.tsv", ["a\ta\t1\t-", "a\tb\t1\t-"])
    stats = IngestStats()
    with caplog.at_level(logging.WARNING):
        recs = ingest_relations(p, (0, 10), stats=stats)
    assert len(recs) == 1 and stats.self_loops == 1


def test_duplicates_keep_last(tmp_path):
    p = write_lines(tmp_path / "r.tsv", ["a\tb\t1\t5", "a\tb\t2\t-"])
    stats = IngestStats()
    [rec] = ingest_relations(p, (0, 10), stats=stats)
    assert rec.label == HOLD and rec.first_seen == 2 and stats.duplicates == 1


def _posts_file(tmp_path, records):
    return write_lines(tmp_path / "p.jsonl", [json.dumps(r) for r in records])


def test_post_window_filter(tmp_path):
    users = UserIndex(["u1"])
    rec = {"user": "u1", "time": 5, "text": "hi", "upvotes": 0}
    p = _posts_file(tmp_path, [rec])
    assert len(ingest_posts(p, (0, 10), users)[0]) == 1
    stats = IngestStats()
    assert ingest_posts(p, (6, 10), users, stats) == [[]]
    assert stats.posts_out_of_window == 1


def test_post_empty_text_and_unknown_user(tmp_path):
    users = UserIndex(["u1"])
    p = _posts_file(tmp_path, [{"user": "u1", "time": 1, "text": "", "upvotes": 0},
                               {"user": "zz", "time": 1, "text": "x", "upvotes": 0}])
    stats = IngestStats()
    assert ingest_posts(p, (0, 10), users, stats) == [[]]
    assert stats.posts_empty == 1 and stats.posts_unknown_user == 1


def test_posts_sorted_and_bad_json(tmp_path):
    users = UserIndex(["u1"])
    p = _posts_file(tmp_path, [{"user": "u1", "time": 9, "text": "b"}, {"user": "u1", "time": 3, "text": "a"}])
    assert [q.time for q in ingest_posts(p, (0, 10), users)[0]] == [3, 9]
    bad = write_lines(tmp_path / "bad.jsonl", ['{"user": "u1", "time": 1, "text": "a"}', "{nope"])
    with pytest.raises(ParseError) as err:
        ingest_posts(bad, (0, 10), users)
    assert err.value.lineno == 2


def test_graph_csr_neighbors():
    G = TemporalGraph(4, [(0, 2), (0, 1), (2, 0), (3, 1)])
    assert G.out_neighbors(0).tolist() == [1, 2]
    assert G.in_neighbors(1).tolist() == [0, 3]
    assert G.has_edge(2, 0) and not G.has_edge(1, 0)
    assert G.in_degree().tolist() == [1, 2, 1, 0]
    with pytest.raises(ValueError):
        TemporalGraph(2, [(0, 0)])


def _rec(i, j, label):
    return RelationRecord(i, j, label, 0, 5 if label == UNFOLLOW else None)


def test_unfollow_matrix_examples():
    assert build_unfollow_matrix([_rec(0, 1, UNFOLLOW)]).entries == {(0, 1)}
    assert build_unfollow_matrix([_rec(0, 1, HOLD)]).entries == set()
    R = build_unfollow_matrix([_rec(0, 1, UNFOLLOW), _rec(1, 0, HOLD)])
    assert R.entries == {(0, 1)} and (1, 0) not in R


def test_mask_test_edges_examples():
    R = UnfollowMatrix(4, [(0, 1)])
    assert mask_test_edges(R, EvalSet([0], [1], [1])).entries == set()
    assert mask_test_edges(R, EvalSet([2], [3], [0])).entries == {(0, 1)}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(2, 30))
def test_mask_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    R = UnfollowMatrix(n, map(tuple, np.argwhere(rng.random((n, n)) < 0.2).tolist()))
    cand = np.argwhere(rng.random((n, n)) < 0.2)
    E = EvalSet(cand[:, 0], cand[:, 1], rng.integers(0, 2, len(cand)))
    Rt = mask_test_edges(R, E)
    dense = Rt.to_dense()
    test = E.pair_set()
    for i in range(n):
        for j in range(n):
            if (i, j) in test:
                assert dense[i, j] == 0
            else:
                assert dense[i, j] == ((i, j) in R)
    positives_in_R = sum(1 for p, y in zip(map(tuple, E.pairs.tolist()), E.label) if p in R)
    assert len(Rt.entries) == len(R.entries) - len(R.entries & test) >= len(R.entries) - positives_in_R - len(test)


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(7))))
def test_unfollow_matrix_order_invariant(order):
    import tempfile
    from pathlib import Path

    lines = ["a\tb\t1\t5", "b\tc\t1\t-", "c\ta\t1\t7", "c\td\t2\t3", "d\ta\t1\t9",
             "b\td\t4\t-", "a\tc\t1\t6"]
    with tempfile.TemporaryDirectory() as tmp:
        ref_users, users = UserIndex(), UserIndex()
        write_lines(Path(tmp) / "ref.tsv", lines)
        write_lines(Path(tmp) / "perm.tsv", [lines[k] for k in order])
        ref = build_unfollow_matrix(ingest_relations(Path(tmp) / "ref.tsv", (0, 10), ref_users), 4)
        got = build_unfollow_matrix(ingest_relations(Path(tmp) / "perm.tsv", (0, 10), users), 4)

    def named(R, idx):
        return {(idx.name(i), idx.name(j)) for i, j in R.entries}

    assert named(got, users) == named(ref, ref_users) == {("a", "b"), ("c", "a"), ("c", "d"), ("d", "a"), ("a", "c")}


def _pool(n_unf, n_hold, posts_for=None):
    recs = [_rec(i, i + 1000, UNFOLLOW) for i in range(n_unf)]
    recs += [_rec(i, i + 2000, HOLD) for i in range(n_hold)]
    n = 2000 + max(n_unf, n_hold) + 1
    posts = [[Post(u, 1, "x")] for u in range(n)]
    return recs, posts


def test_balanced_eval_ratio_one():
    recs, posts = _pool(10, 100)
    E = build_balanced_eval_set(recs, posts, seed=0, hold_ratio=1.0)
    assert (E.label == 1).sum() == 10 and (E.label == 0).sum() == 10


def test_published_hold_ratio_reproduces_counts():
    recs, posts = _pool(6790, 7000)
    E = build_balanced_eval_set(recs, posts, seed=0, hold_ratio=PUBLISHED_HOLD_RATIO)
    assert (E.label == 1).sum() == 6790 and (E.label == 0).sum() == 5802 and len(E) == 12592


def test_followee_without_posts_excluded():
    recs, posts = _pool(3, 3)
    posts[1000] = []
    E = build_balanced_eval_set(recs, posts, seed=0, hold_ratio=1.0)
    assert (0, 1000) not in E.pair_set()
    assert all(posts[i] and posts[j] for i, j in E.pairs.tolist())


def test_insufficient_holds_warns(caplog):
    recs, posts = _pool(10, 3)
    with caplog.at_level(logging.WARNING):
        E = build_balanced_eval_set(recs, posts, seed=0, hold_ratio=1.0)
    assert (E.label == 0).sum() == 3 and "hold edges" in caplog.text


def test_kfold_sizes_and_determinism():
    n = 12592
    E = EvalSet(np.arange(n), np.arange(n) + 1, np.zeros(n, int))
    F = kfold_split(E, 5, seed=3)
    assert sorted(fold_sizes(F), reverse=True) == [2519, 2519, 2518, 2518, 2518]
    assert np.array_equal(F.fold, kfold_split(E, 5, seed=3).fold)
    small = kfold_split(EvalSet(np.arange(5), np.arange(5), np.zeros(5, int)), 5, seed=0)
    assert fold_sizes(small) == [1] * 5
    with pytest.raises(ValueError):
        kfold_split(E, 1)


def test_eval_set_tsv_roundtrip(tmp_path):
    E = kfold_split(EvalSet([0, 1, 2, 3, 4], [1, 2, 3, 4, 0], [1, 0, 1, 0, 1]), 5, seed=1)
    E.to_tsv(tmp_path / "e.tsv")
    F = EvalSet.from_tsv(tmp_path / "e.tsv")
    assert np.array_equal(E.pairs, F.pairs) and np.array_equal(E.fold, F.fold) and np.array_equal(E.label, F.label)
