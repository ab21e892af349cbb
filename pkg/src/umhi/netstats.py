"""Centrality, social roles, content similarity, exposure and unfollow-ratio curves."""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .graph import EvalSet, Post, TemporalGraph, Window
from .text.tokenize import tokenize

ORDINARY, LEADER, HOLE = 0, 1, 2
ROLE_NAMES = {ORDINARY: "OrdUsr", LEADER: "OpnLdr", HOLE: "StrHole"}
ROLE_CODES = {v: k for k, v in ROLE_NAMES.items()}


class PageRankConvergenceWarning(RuntimeWarning):
    pass


class UndefinedValueError(ValueError):
    pass


def pagerank(G: TemporalGraph, damping: float = 0.85, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Power-iteration PageRank over follow edges (follower -> followee).

    Dangling users spread their mass uniformly. Stops once the L1 change
    drops below ``tol``; otherwise warns and returns the last iterate.
    """
    n = G.num_users
    if n < 1:
        raise ValueError("graph has no users")
    out_deg = G.out_degree().astype(float)
    A = G.adjacency()
    inv = np.divide(1.0, out_deg, out=np.zeros(n), where=out_deg > 0)
    MT = (sp.diags(inv) @ A).T.tocsr()
    dangling = out_deg == 0
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        x_new = damping * (MT @ x + x[dangling].sum() / n) + (1.0 - damping) / n
        x_new /= x_new.sum()
        err = np.abs(x_new - x).sum()
        x = x_new
        if err < tol:
            return x
    warnings.warn(f"pagerank did not converge in {max_iter} iterations", PageRankConvergenceWarning, stacklevel=2)
    return x


def burt_constraint(G: TemporalGraph) -> np.ndarray:
    """Burt's constraint on the symmetrized, unit-weight graph.

    ``C_i = sum_j (p_ij + sum_q p_iq p_qj)^2`` over neighbors ``j`` of ``i``.
    With no self-loops the indirect sum is exactly ``(P @ P)_ij``.
    Isolated users get ``inf``.
    """
    n = G.num_users
    indptr, indices = G.undirected()
    deg = np.diff(indptr).astype(float)
    A = sp.csr_matrix((np.ones(len(indices)), indices, indptr), shape=(n, n))
    P = sp.diags(np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)) @ A
    total = P + (P @ P).multiply(A)
    C = np.asarray(total.multiply(total).sum(axis=1)).ravel()
    C[deg == 0] = np.inf
    return C


def assign_roles(pagerank_scores, constraint_scores, fraction: float = 0.05) -> np.ndarray:
    """Top ``fraction`` by PageRank become leaders, then the lowest-constraint
    ``fraction`` of the rest become structure holes; ties go to lower ids."""
    pr = np.asarray(pagerank_scores, dtype=float)
    cs = np.asarray(constraint_scores, dtype=float)
    if pr.shape != cs.shape:
        raise ValueError("score vectors differ in length")
    n = len(pr)
    k = math.ceil(fraction * n)
    ids = np.arange(n)
    roles = np.full(n, ORDINARY, dtype=np.int64)
    leaders = np.lexsort((ids, -pr))[:k]
    roles[leaders] = LEADER
    cand = ids[(roles == ORDINARY) & np.isfinite(cs)]
    holes = cand[np.lexsort((cand, cs[cand]))][:k]
    roles[holes] = HOLE
    return roles


def user_documents(posts: Sequence[Sequence[Post]]) -> list[list[str]]:
    """One token list per user: all window posts concatenated."""
    return [tokenize(" ".join(p.text for p in user_posts)) for user_posts in posts]


class CorpusIdf:
    """Smoothed idf, ``ln((1 + N) / (1 + df)) + 1``, over a set of documents."""

    def __init__(self, documents: Sequence[Sequence[str]]):
        df: Counter = Counter()
        for doc in documents:
            df.update(set(doc))
        self.n_docs = len(documents)
        self.vocab = {w: k for k, w in enumerate(sorted(df))}
        counts = np.array([df[w] for w in sorted(df)], dtype=float)
        self.idf = np.log((1.0 + self.n_docs) / (1.0 + counts)) + 1.0

    def vector(self, tokens: Sequence[str]) -> dict[int, float]:
        tf = Counter(t for t in tokens if t in self.vocab)
        return {self.vocab[t]: c * self.idf[self.vocab[t]] for t, c in tf.items()}

    def matrix(self, documents: Sequence[Sequence[str]]) -> sp.csr_matrix:
        """Row-normalized tf-idf matrix, one row per document."""
        rows, cols, vals = [], [], []
        for r, doc in enumerate(documents):
            for c, v in self.vector(doc).items():
                rows.append(r)
                cols.append(c)
                vals.append(v)
        X = sp.csr_matrix((vals, (rows, cols)), shape=(len(documents), len(self.vocab)))
        norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        return (sp.diags(np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)) @ X).tocsr()


def content_similarity(posts_i: Sequence[Post], posts_j: Sequence[Post], corpus_idf: CorpusIdf) -> float:
    """Cosine of the two users' tf-idf vectors; 0 when either is empty."""
    vi = corpus_idf.vector(tokenize(" ".join(p.text for p in posts_i)))
    vj = corpus_idf.vector(tokenize(" ".join(p.text for p in posts_j)))
    ni = math.sqrt(sum(v * v for v in vi.values()))
    nj = math.sqrt(sum(v * v for v in vj.values()))
    if ni == 0.0 or nj == 0.0:
        return 0.0
    dot = sum(v * vj.get(k, 0.0) for k, v in vi.items())
    return min(1.0, max(0.0, dot / (ni * nj)))


class TfidfIndex:
    """Per-user normalized tf-idf rows for batched pair similarity."""

    def __init__(self, posts: Sequence[Sequence[Post]]):
        docs = user_documents(posts)
        self.idf = CorpusIdf(docs)
        self.X = self.idf.matrix(docs)

    def similarity(self, i, j) -> np.ndarray:
        i = np.atleast_1d(np.asarray(i, dtype=np.int64))
        j = np.atleast_1d(np.asarray(j, dtype=np.int64))
        out = np.asarray(self.X[i].multiply(self.X[j]).sum(axis=1)).ravel()
        return np.clip(out, 0.0, 1.0)


def exposure(posts_j: Sequence[Post], window: Window) -> int:
    """Number of followee posts with ``t_start <= time <= t_end``."""
    return sum(1 for p in posts_j if window[0] <= p.time <= window[1])


def rou(labels) -> float:
    """Unfollow ratio ``N_un / (N_un + N_ho)`` of a labeled subset."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise UndefinedValueError("rou of an empty subset is undefined")
    return float(np.count_nonzero(labels == 1)) / labels.size


@dataclass
class RouRow:
    lo: float
    hi: float
    role: int
    n_unfollow: int
    n_hold: int

    @property
    def rou(self) -> float:
        return self.n_unfollow / (self.n_unfollow + self.n_hold)

    @property
    def n(self) -> int:
        return self.n_unfollow + self.n_hold


@dataclass
class RouTable:
    condition: str
    rows: list[RouRow]

    def for_role(self, role: int) -> list[RouRow]:
        return [r for r in self.rows if r.role == role]

    def to_tsv(self) -> str:
        out = ["condition_lo\tcondition_hi\trole\tn_unfollow\tn_hold\trou"]
        for r in self.rows:
            out.append(f"{r.lo:.6g}\t{r.hi:.6g}\t{ROLE_NAMES[r.role]}\t{r.n_unfollow}\t{r.n_hold}\t{r.rou:.6f}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_tsv(cls, text: str, condition: str = "") -> "RouTable":
        rows = []
        for line in text.splitlines()[1:]:
            if not line.strip():
                continue
            lo, hi, role, nu, nh, _ = line.split("\t")
            rows.append(RouRow(float(lo), float(hi), ROLE_CODES[role], int(nu), int(nh)))
        return cls(condition, rows)


def _merge_small(counts: list[list[int]], min_count: int) -> list[list[int]]:
    # counts: [[first_bin, last_bin, n_un, n_ho], ...]
    counts = [c[:] for c in counts]
    while len(counts) > 1:
        sizes = [c[2] + c[3] for c in counts]
        k = int(np.argmin(sizes))
        if sizes[k] >= min_count:
            break
        if k == 0:
            nb = 1
        elif k == len(counts) - 1:
            nb = k - 1
        else:
            nb = k - 1 if sizes[k - 1] <= sizes[k + 1] else k + 1
        a, b = sorted((k, nb))
        merged = [counts[a][0], counts[b][1], counts[a][2] + counts[b][2], counts[a][3] + counts[b][3]]
        counts[a:b + 1] = [merged]
    return counts


def quantile_bins(values, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Bin index per value plus bin edges from quantiles; tied edges collapse."""
    values = np.asarray(values, dtype=float)
    edges = np.unique(np.quantile(values, np.linspace(0.0, 1.0, bins + 1)))
    if len(edges) < 2:
        edges = np.array([edges[0], edges[0]])
    idx = np.searchsorted(edges[1:-1], values, side="right")
    return idx, edges


def rou_curve(
    E: EvalSet,
    values,
    roles,
    bins: int = 10,
    min_count: int = 20,
    condition: str = "",
) -> RouTable:
    """Unfollow ratio per (quantile bin of ``values``, followee role).

    ``values`` holds the condition (similarity or exposure) per pair and
    ``roles`` the role of every user. Cells with fewer than ``min_count``
    pairs are merged into a neighboring bin of the same role.
    """
    values = np.asarray(values, dtype=float)
    if len(values) != len(E):
        raise ValueError("one condition value per pair required")
    roles = np.asarray(roles)
    idx, edges = quantile_bins(values, bins) if len(E) else (np.array([], int), np.array([0.0, 0.0]))
    nb = len(edges) - 1
    followee_role = roles[E.followee] if len(E) else np.array([], int)
    rows: list[RouRow] = []
    for role in (ORDINARY, LEADER, HOLE):
        sel = followee_role == role
        if not sel.any():
            continue
        un = np.bincount(idx[sel], weights=(E.label[sel] == 1), minlength=nb).astype(int)
        tot = np.bincount(idx[sel], minlength=nb)
        cells = [[b, b, int(un[b]), int(tot[b] - un[b])] for b in range(nb) if tot[b] > 0]
        for first, last, n_un, n_ho in _merge_small(cells, min_count):
            rows.append(RouRow(float(edges[first]), float(edges[last + 1]), role, n_un, n_ho))
    return RouTable(condition, rows)


def interaction_values(E: EvalSet, condition: str, G: TemporalGraph, tfidf: TfidfIndex | None = None) -> np.ndarray:
    """Per-pair similarity or followee exposure for :func:`rou_curve`."""
    if condition == "similarity":
        tfidf = tfidf or TfidfIndex(G.posts)
        return tfidf.similarity(E.follower, E.followee)
    if condition == "exposure":
        return np.array([exposure(G.posts[j], G.window) for j in E.followee.tolist()], dtype=float)
    raise ValueError(f"unknown condition {condition!r}")
