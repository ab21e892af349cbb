"""Seeded synthetic follow network with planted unfollow mechanisms.

The generator produces a community-structured, degree-skewed follow
graph, topic-driven posts, and unfollow labels drawn from a logistic
model in similarity, exposure, the followee's structural role, a
cross-community indicator and a low-rank history term. Roles are taken
from :func:`umhi.netstats.assign_roles` on the generated graph, so the
generator and the analytics share one definition.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..graph import (HOLD, PUBLISHED_HOLD_RATIO, UNFOLLOW, EvalSet, Post, RelationRecord, TemporalGraph,
                     UnfollowMatrix, build_balanced_eval_set, build_unfollow_matrix)
from ..netstats import HOLE, LEADER, TfidfIndex, assign_roles, burt_constraint, pagerank

DAY = 86_400


@dataclass
class SynthConfig:
    n_users: int = 2000
    n_communities: int = 8
    mean_out_degree: float = 50.0
    cross_fraction: float = 0.08
    broker_fraction: float = 0.04
    broker_cross_fraction: float = 0.6
    uniform_attach: float = 0.25
    vocab_size: int = 2000
    n_topics: int = 16
    common_word_rate: float = 0.25
    mean_posts: float = 5.0
    mean_post_len: float = 5.0
    silent_fraction: float = 0.03
    history_rank: int = 4
    beta0: float = -1.1
    beta_sim: float = -1.0
    beta_expo: float = -0.4
    beta_leader: float = -0.4
    beta_leader_sim: float = -0.8
    beta_leader_expo: float = -0.8
    beta_hole: float = 0.4
    beta_hole_sim: float = -0.3
    beta_hole_expo: float = 0.0
    beta_cross: float = 1.5
    beta_hist: float = 2.0
    target_pairs: int = 20000
    hold_ratio: float = PUBLISHED_HOLD_RATIO
    window_start: int = 1_600_000_000
    window_days: int = 30
    seed: int = 0

    def validate(self) -> None:
        if self.n_users < 10:
            raise ValueError("n_users must be at least 10")
        if self.n_communities < 1 or self.n_communities > self.n_users:
            raise ValueError("n_communities must be in 1..n_users")
        if self.n_topics < 1 or self.vocab_size < 2 * self.n_topics:
            raise ValueError("need at least one topic and two words per topic")
        if self.mean_out_degree <= 0 or self.mean_posts <= 0 or self.mean_post_len < 1:
            raise ValueError("degree, post count and post length means must be positive")
        for name in ("cross_fraction", "broker_fraction", "broker_cross_fraction", "uniform_attach",
                     "common_word_rate", "silent_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.history_rank < 1 or self.target_pairs < 2:
            raise ValueError("history_rank and target_pairs must be positive")

    @property
    def window(self) -> tuple[int, int]:
        return (self.window_start, self.window_start + self.window_days * DAY)


@dataclass
class SynthDataset:
    config: SynthConfig
    graph: TemporalGraph
    records: list[RelationRecord]
    unfollow: UnfollowMatrix
    eval_set: EvalSet
    truth: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return [f"u{k:05d}" for k in range(self.graph.num_users)]


def _zscore(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    return (x - x.mean()) / (sd if sd > 0 else 1.0)


def _generate_edges(cfg: SynthConfig, rng: np.random.Generator, community: np.ndarray, broker: np.ndarray):
    n, C = cfg.n_users, cfg.n_communities
    members = [np.flatnonzero(community == c) for c in range(C)]
    # each community keeps an urn of earlier targets: drawing from it is
    # proportional to in-degree, i.e. preferential attachment
    urns: list[list[int]] = [[] for _ in range(C)]
    sigma = 0.8
    degrees = rng.lognormal(math.log(cfg.mean_out_degree) - 0.5 * sigma ** 2, sigma, n)
    degrees = np.clip(np.rint(degrees), 1, n // 2).astype(int)
    edges = set()
    for i in rng.permutation(n).tolist():
        cross_p = cfg.broker_cross_fraction if broker[i] else cfg.cross_fraction
        chosen = set()
        attempts = 0
        while len(chosen) < degrees[i] and attempts < 20 * degrees[i]:
            attempts += 1
            c = community[i]
            if C > 1 and rng.random() < cross_p:
                c = (c + 1 + rng.integers(C - 1)) % C
            urn = urns[c]
            if not urn or rng.random() < cfg.uniform_attach:
                j = int(members[c][rng.integers(len(members[c]))])
            else:
                j = urn[rng.integers(len(urn))]
            if j == i or j in chosen:
                continue
            chosen.add(j)
        for j in sorted(chosen):
            edges.add((i, j))
            urns[community[j]].append(j)
    return np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)


def _generate_posts(cfg: SynthConfig, rng: np.random.Generator, community: np.ndarray, broker: np.ndarray,
                    in_degree: np.ndarray) -> tuple[list[list[Post]], np.ndarray]:
    n, K, C = cfg.n_users, cfg.n_topics, cfg.n_communities
    n_common = max(1, cfg.vocab_size // 10)
    per_topic = (cfg.vocab_size - n_common) // K
    zipf_topic = 1.0 / np.arange(1, per_topic + 1)
    zipf_topic /= zipf_topic.sum()
    zipf_common = 1.0 / np.arange(1, n_common + 1)
    zipf_common /= zipf_common.sum()
    # community c favours the topics congruent to c modulo C
    theta = np.empty((n, K))
    for i in range(n):
        alpha = np.full(K, 0.1)
        if not broker[i]:
            alpha[np.arange(K) % C == community[i] % C] = 3.0
        else:
            alpha[:] = 0.5
        theta[i] = rng.dirichlet(alpha)
    w0, w1 = cfg.window
    counts = 1 + np.floor(rng.lognormal(math.log(cfg.mean_posts) - 0.9, 1.1, n)).astype(int)
    counts[rng.random(n) < cfg.silent_fraction] = 0
    popularity = np.sqrt(in_degree + 1.0)
    posts: list[list[Post]] = []
    for i in range(n):
        user_posts = []
        for _ in range(counts[i]):
            topic = rng.choice(K, p=theta[i])
            length = 1 + rng.poisson(cfg.mean_post_len - 1)
            common = rng.random(length) < cfg.common_word_rate
            words = np.where(common, rng.choice(n_common, length, p=zipf_common),
                             n_common + topic * per_topic + rng.choice(per_topic, length, p=zipf_topic))
            text = " ".join(f"w{w}" for w in words.tolist())
            t = int(rng.integers(w0, w1 + 1))
            up = int(rng.poisson(popularity[i] * rng.gamma(2.0, 0.5)))
            user_posts.append(Post(i, t, text, up))
        user_posts.sort(key=lambda p: p.time)
        posts.append(user_posts)
    return posts, theta


def generate_synthetic_benchmark(cfg: SynthConfig) -> SynthDataset:
    """Build a complete labeled dataset from ``cfg``; identical seeds give identical output."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_users
    community = rng.integers(cfg.n_communities, size=n)
    broker = rng.random(n) < cfg.broker_fraction
    edges = _generate_edges(cfg, rng, community, broker)
    in_degree = np.bincount(edges[:, 1], minlength=n)
    posts, theta = _generate_posts(cfg, rng, community, broker, in_degree)
    G = TemporalGraph(n, edges, posts, cfg.window)

    pr = pagerank(G)
    cs = burt_constraint(G)
    roles = assign_roles(pr, cs)

    src, dst = edges[:, 0], edges[:, 1]
    sim = TfidfIndex(posts).similarity(src, dst)
    expo = np.log1p(G.post_counts()[dst].astype(float))
    zs, ze = _zscore(sim), _zscore(expo)
    r = cfg.history_rank
    # rank r + 2: follower and followee propensities plus an interaction
    A = rng.normal(size=(n, r))
    B = rng.normal(size=(n, r))
    prop_i = rng.normal(size=n)
    prop_j = rng.normal(size=n)
    hist = (prop_i[src] + prop_j[dst] + np.einsum("ij,ij->i", A[src], B[dst]) / math.sqrt(r)) / math.sqrt(3.0)
    leader = (roles[dst] == LEADER).astype(float)
    hole = (roles[dst] == HOLE).astype(float)
    cross = (community[src] != community[dst]).astype(float)
    logit = (cfg.beta0 + cfg.beta_sim * zs + cfg.beta_expo * ze
             + leader * (cfg.beta_leader + cfg.beta_leader_sim * zs + cfg.beta_leader_expo * ze)
             + hole * (cfg.beta_hole + cfg.beta_hole_sim * zs + cfg.beta_hole_expo * ze)
             + cfg.beta_cross * cross + cfg.beta_hist * hist)
    prob = 1.0 / (1.0 + np.exp(-logit))
    label = (rng.random(len(edges)) < prob).astype(np.int64)

    w0, w1 = cfg.window
    first_seen = rng.integers(w0 - 365 * DAY, w0, size=len(edges))
    dissolved = rng.integers(w0, w1 + 1, size=len(edges))
    records = [RelationRecord(int(i), int(j), int(y), int(f), int(d) if y == UNFOLLOW else None)
               for i, j, y, f, d in zip(src, dst, label, first_seen, dissolved)]
    R = build_unfollow_matrix(records, n)
    cap = int(cfg.target_pairs / (1.0 + cfg.hold_ratio))
    E = build_balanced_eval_set(records, posts, seed=cfg.seed, hold_ratio=cfg.hold_ratio, max_unfollow=cap)
    truth = {
        "community": community, "broker": broker, "theta": theta, "roles": roles, "pagerank": pr,
        "constraint": cs, "history_follower": A, "history_followee": B,
        "propensity_follower": prop_i, "propensity_followee": prop_j, "edge_history": hist, "edge_similarity": sim,
        "edge_logit": logit, "edge_probability": prob, "edge_label": label,
        "expected_unfollow_rate": float(prob.mean()), "realized_unfollow_rate": float(label.mean()),
    }
    return SynthDataset(cfg, G, records, R, E, truth)


def write_synthetic(ds: SynthDataset, directory) -> tuple[Path, Path]:
    """Write ``relations.tsv`` and ``posts.jsonl`` in the ingest formats."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = ds.names
    rel, posts = d / "relations.tsv", d / "posts.jsonl"
    with open(rel, "w", encoding="utf-8") as fh:
        fh.write("# follower\tfollowee\tfirst_seen\tdissolved_at\n")
        for r in ds.records:
            dis = "-" if r.dissolved_at is None else str(r.dissolved_at)
            fh.write(f"{names[r.follower]}\t{names[r.followee]}\t{r.first_seen}\t{dis}\n")
    with open(posts, "w", encoding="utf-8") as fh:
        for user_posts in ds.graph.posts:
            for p in user_posts:
                fh.write(json.dumps({"user": names[p.user], "time": p.time, "text": p.text,
                                     "upvotes": p.upvotes}, sort_keys=True) + "\n")
    return rel, posts


def config_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)


def stochastic_block_model(sizes, p_in: float, p_out: float, seed: int = 0,
                           directed: bool = True) -> tuple[TemporalGraph, np.ndarray]:
    """Bernoulli block graph and its block labels."""
    rng = np.random.default_rng(seed)
    blocks = np.repeat(np.arange(len(sizes)), sizes)
    n = len(blocks)
    P = np.where(blocks[:, None] == blocks[None, :], p_in, p_out)
    A = rng.random((n, n)) < P
    if not directed:
        A = np.triu(A, 1)
        A = A | A.T
    np.fill_diagonal(A, False)
    return TemporalGraph(n, np.argwhere(A)), blocks
