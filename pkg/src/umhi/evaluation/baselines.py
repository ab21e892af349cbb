"""Hand-crafted pair features and the logistic-regression baselines.

``sa`` features combine graph structure with posting activity; ``da``
features replace structure with a truncated-SVD projection of each
user's tf-idf document.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..graph import TemporalGraph
from ..netstats import TfidfIndex

ACTION_FEATURES = ("posts_follower", "posts_followee", "exposure", "similarity",
                   "upvotes_mean", "upvotes_max")
STRUCTURAL_FEATURES = ("in_deg_follower", "out_deg_follower", "in_deg_followee", "out_deg_followee",
                       "common_neighbors", "reciprocal", "jaccard")


class UserStats:
    """Per-user aggregates reused by every pair feature lookup."""

    def __init__(self, G: TemporalGraph, tfidf: TfidfIndex | None = None):
        self.G = G
        self.tfidf = tfidf if tfidf is not None else TfidfIndex(G.posts)
        self.post_count = G.post_counts().astype(float)
        self.exposure = np.array([sum(1 for p in ps if G.window[0] <= p.time <= G.window[1])
                                  for ps in G.posts], dtype=float)
        self.up_mean = np.array([np.mean([p.upvotes for p in ps]) if ps else 0.0 for ps in G.posts])
        self.up_max = np.array([max((p.upvotes for p in ps), default=0) for ps in G.posts], dtype=float)
        indptr, indices = G.undirected()
        self.sym = sp.csr_matrix((np.ones(len(indices)), indices, indptr), shape=(G.num_users, G.num_users))
        self.sym_deg = np.diff(indptr).astype(float)


def action_features(stats: UserStats, I, J) -> np.ndarray:
    I = np.asarray(I, dtype=np.int64)
    J = np.asarray(J, dtype=np.int64)
    return np.column_stack([
        np.log1p(stats.post_count[I]),
        np.log1p(stats.post_count[J]),
        np.log1p(stats.exposure[J]),
        stats.tfidf.similarity(I, J),
        np.log1p(stats.up_mean[J]),
        np.log1p(stats.up_max[J]),
    ])


def structural_features(stats: UserStats, I, J) -> np.ndarray:
    I = np.asarray(I, dtype=np.int64)
    J = np.asarray(J, dtype=np.int64)
    G = stats.G
    ind, outd = G.in_degree().astype(float), G.out_degree().astype(float)
    A = stats.sym
    common = np.asarray(A[I].multiply(A[J]).sum(axis=1)).ravel()
    # the two endpoints themselves are not counted as each other's neighbors
    union = stats.sym_deg[I] + stats.sym_deg[J] - common
    jaccard = np.divide(common, union, out=np.zeros_like(common), where=union > 0)
    reciprocal = np.array([G.has_edge(j, i) for i, j in zip(I.tolist(), J.tolist())], dtype=float)
    return np.column_stack([np.log1p(ind[I]), np.log1p(outd[I]), np.log1p(ind[J]), np.log1p(outd[J]),
                            np.log1p(common), reciprocal, jaccard])


class TruncatedSVD:
    """Rank-``k`` projection onto the top right singular vectors of a training matrix.

    Uses a dense LAPACK SVD below ``dense_limit`` columns-times-rows and
    ARPACK otherwise. Signs are fixed so that each component's largest
    absolute loading is positive.
    """

    def __init__(self, k: int = 50, dense_limit: int = 20_000_000):
        self.k = k
        self.dense_limit = dense_limit

    def fit(self, X) -> "TruncatedSVD":
        n, d = X.shape
        k = min(self.k, n, d)
        if n * d <= self.dense_limit or k >= min(n, d) - 1:
            Xd = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)
            _, s, Vt = np.linalg.svd(Xd, full_matrices=False)
            s, Vt = s[:k], Vt[:k]
        else:
            from scipy.sparse.linalg import svds
            _, s, Vt = svds(sp.csr_matrix(X, dtype=float), k=k, v0=np.ones(min(n, d)) / np.sqrt(min(n, d)))
            order = np.argsort(-s)
            s, Vt = s[order], Vt[order]
        flip = np.sign(Vt[np.arange(len(Vt)), np.abs(Vt).argmax(axis=1)])
        self.components = Vt * flip[:, None]
        self.singular_values = s
        return self

    def transform(self, X) -> np.ndarray:
        return np.asarray(X @ self.components.T)

    def reconstruction_error(self, X) -> float:
        """Squared Frobenius norm of ``X - X V V^T``."""
        Xd = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)
        Z = Xd @ self.components.T
        return float(np.sum((Xd - Z @ self.components) ** 2))


def content_features(stats: UserStats, train_users, I, J, k: int = 50) -> np.ndarray:
    """SVD-reduced tf-idf vectors of both endpoints; the basis is fit on ``train_users`` only."""
    train_users = np.unique(np.asarray(train_users, dtype=np.int64))
    svd = TruncatedSVD(k).fit(stats.tfidf.X[train_users])
    Z = svd.transform(stats.tfidf.X)
    return np.hstack([Z[np.asarray(I)], Z[np.asarray(J)]])


def extract_baseline_features(stats: UserStats, I, J, kind: str, train_users=None, svd_dim: int = 50) -> np.ndarray:
    act = action_features(stats, I, J)
    if kind == "structural_action":
        return np.hstack([structural_features(stats, I, J), act])
    if kind == "content_action":
        if train_users is None:
            raise ValueError("content features need the training users to fit the SVD basis")
        return np.hstack([content_features(stats, train_users, I, J, svd_dim), act])
    raise ValueError(f"unknown feature kind {kind!r}")


@dataclass
class LogisticModel:
    weights: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    iterations: int = 0
    grad_norm: float = 0.0

    def decision(self, X) -> np.ndarray:
        return ((np.asarray(X, dtype=float) - self.mean) / self.scale) @ self.weights + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return 0.5 * (np.tanh(0.5 * self.decision(X)) + 1.0)


def logistic_objective(w, b, Z, y, l2):
    """Summed log loss plus ``l2 / 2 * |w|^2``; the intercept is not penalized."""
    z = Z @ w + b
    loss = np.sum(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))) + 0.5 * l2 * w @ w
    r = 0.5 * (np.tanh(0.5 * z) + 1.0) - y
    return loss, Z.T @ r + l2 * w, r.sum()


def train_logistic(X, y, l2: float = 1.0, tol: float = 1e-6, max_iter: int = 500) -> LogisticModel:
    """Accelerated gradient descent on standardized features with a fixed 1/L step."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(np.unique(y)) < 2:
        raise ValueError("logistic regression needs both classes")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    scale = np.where(sd > 1e-12, sd, 1.0)
    Z = (X - mean) / scale
    Za = np.hstack([Z, np.ones((len(Z), 1))])
    L = 0.25 * np.linalg.norm(Za, 2) ** 2 + l2
    theta = np.zeros(Z.shape[1] + 1)
    prev = theta.copy()
    momentum = theta.copy()
    t = 1.0
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        _, gw, gb = logistic_objective(momentum[:-1], momentum[-1], Z, y, l2)
        theta = momentum - np.append(gw, gb) / L
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        momentum = theta + ((t - 1) / t_next) * (theta - prev)
        prev, t = theta, t_next
        _, gw, gb = logistic_objective(theta[:-1], theta[-1], Z, y, l2)
        gnorm = float(np.linalg.norm(np.append(gw, gb)))
        if gnorm < tol:
            break
    return LogisticModel(theta[:-1], float(theta[-1]), mean, scale, it, gnorm)
