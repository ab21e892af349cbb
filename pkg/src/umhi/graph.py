"""Relation/post ingestion, the unfollow matrix and evaluation-set construction."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

HOLD, UNFOLLOW = 0, 1

# Table 1 of the source dataset: 5802 hold vs 6790 unfollow edges.
PUBLISHED_HOLD_RATIO = 5802 / 6790


class ParseError(ValueError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


class UserIndex:
    """Bijection between external string ids and dense 0-based ids."""

    def __init__(self, external: Iterable[str] = ()):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []
        for name in external:
            self.add(name)

    def add(self, name: str) -> int:
        uid = self._ids.get(name)
        if uid is None:
            uid = len(self._names)
            self._ids[name] = uid
            self._names.append(name)
        return uid

    def get(self, name: str) -> int | None:
        return self._ids.get(name)

    def __getitem__(self, name: str) -> int:
        return self._ids[name]

    def name(self, uid: int) -> str:
        return self._names[uid]

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids


@dataclass
class IngestStats:
    duplicates: int = 0
    self_loops: int = 0
    posts_out_of_window: int = 0
    posts_empty: int = 0
    posts_unknown_user: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RelationRecord:
    follower: int
    followee: int
    label: int
    first_seen: int
    dissolved_at: int | None = None


@dataclass(frozen=True)
class Post:
    user: int
    time: int
    text: str
    upvotes: int = 0


Window = tuple[int, int]


def _in_window(t: int, window: Window) -> bool:
    return window[0] <= t <= window[1]


def ingest_relations(
    path,
    window: Window,
    users: UserIndex | None = None,
    stats: IngestStats | None = None,
) -> list[RelationRecord]:
    """Parse a tab-separated relations file into dense-id records.

    Columns are ``follower, followee, first_seen, dissolved_at`` where the
    last is an epoch or ``-``. Lines starting with ``#`` are skipped. A
    repeated (follower, followee) pair keeps its last occurrence.
    """
    users = users if users is not None else UserIndex()
    stats = stats if stats is not None else IngestStats()
    by_pair: dict[tuple[int, int], RelationRecord] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 4:
                raise ParseError(path, lineno, f"expected >=4 tab-separated fields, got {len(parts)}")
            src, dst, first, dissolved = parts[0], parts[1], parts[2], parts[3]
            try:
                first_seen = int(first)
                dissolved_at = None if dissolved.strip() == "-" else int(dissolved)
            except ValueError as exc:
                raise ParseError(path, lineno, f"bad epoch value ({exc})") from None
            if src == dst:
                stats.self_loops += 1
                log.warning("%s:%d: self-loop %r rejected", path, lineno, src)
                continue
            i, j = users.add(src), users.add(dst)
            label = UNFOLLOW if dissolved_at is not None and _in_window(dissolved_at, window) else HOLD
            if (i, j) in by_pair:
                stats.duplicates += 1
                del by_pair[(i, j)]
            by_pair[(i, j)] = RelationRecord(i, j, label, first_seen, dissolved_at)
    if stats.duplicates:
        log.warning("%s: %d duplicate relation records (kept last)", path, stats.duplicates)
    return list(by_pair.values())


def ingest_posts(
    path,
    window: Window,
    users: UserIndex,
    stats: IngestStats | None = None,
) -> list[list[Post]]:
    """Read JSON-lines posts into per-user, time-sorted lists.

    Posts outside the closed window, with empty text, or by users absent
    from ``users`` are dropped and counted in ``stats``.
    """
    stats = stats if stats is not None else IngestStats()
    per_user: list[list[Post]] = [[] for _ in range(len(users))]
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
                name, t, text = str(obj["user"]), int(obj["time"]), str(obj["text"])
                upvotes = int(obj.get("upvotes", 0))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, lineno, f"invalid post record ({exc})") from None
            uid = users.get(name)
            if uid is None:
                stats.posts_unknown_user += 1
                continue
            if not _in_window(t, window):
                stats.posts_out_of_window += 1
                continue
            if not text:
                stats.posts_empty += 1
                continue
            per_user[uid].append(Post(uid, t, text, upvotes))
    if stats.posts_unknown_user:
        log.warning("%s: %d posts by unknown users dropped", path, stats.posts_unknown_user)
    for lst in per_user:
        lst.sort(key=lambda p: p.time)
    return per_user


def _csr(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst.astype(np.int64)


class TemporalGraph:
    """Directed follow graph at the start of the window plus per-user posts.

    Adjacency is stored as CSR arrays (``out_ptr``/``out_idx`` and
    ``in_ptr``/``in_idx``) with sorted, duplicate-free neighbor lists.
    """

    def __init__(
        self,
        num_users: int,
        edges: np.ndarray,
        posts: Sequence[Sequence[Post]] | None = None,
        window: Window = (0, 0),
    ):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            if edges.min() < 0 or edges.max() >= num_users:
                raise ValueError("edge endpoint outside 0..num_users-1")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops are not allowed")
            edges = np.unique(edges, axis=0)
        self.num_users = int(num_users)
        self.window = (int(window[0]), int(window[1]))
        self.edges = edges
        self.out_ptr, self.out_idx = _csr(num_users, edges[:, 0], edges[:, 1])
        self.in_ptr, self.in_idx = _csr(num_users, edges[:, 1], edges[:, 0])
        if posts is None:
            posts = [[] for _ in range(num_users)]
        if len(posts) != num_users:
            raise ValueError("posts must have one list per user")
        self.posts = [list(p) for p in posts]
        self._und = None

    @classmethod
    def from_records(cls, num_users: int, records: Iterable[RelationRecord], posts=None, window=(0, 0)):
        edges = np.array([(r.follower, r.followee) for r in records], dtype=np.int64).reshape(-1, 2)
        return cls(num_users, edges, posts, window)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def out_neighbors(self, i: int) -> np.ndarray:
        return self.out_idx[self.out_ptr[i]:self.out_ptr[i + 1]]

    def in_neighbors(self, i: int) -> np.ndarray:
        return self.in_idx[self.in_ptr[i]:self.in_ptr[i + 1]]

    def out_degree(self) -> np.ndarray:
        return np.diff(self.out_ptr)

    def in_degree(self) -> np.ndarray:
        return np.diff(self.in_ptr)

    def has_edge(self, i: int, j: int) -> bool:
        nb = self.out_neighbors(i)
        k = np.searchsorted(nb, j)
        return bool(k < len(nb) and nb[k] == j)

    def undirected(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR of the symmetrized graph (edge if i->j or j->i)."""
        if self._und is None:
            both = np.concatenate([self.edges, self.edges[:, ::-1]]) if len(self.edges) else self.edges
            both = np.unique(both, axis=0) if len(both) else both.reshape(0, 2)
            self._und = _csr(self.num_users, both[:, 0], both[:, 1])
        return self._und

    def adjacency(self) -> sp.csr_matrix:
        n = self.num_users
        data = np.ones(len(self.edges))
        return sp.csr_matrix((data, (self.edges[:, 0], self.edges[:, 1])), shape=(n, n))

    def post_counts(self) -> np.ndarray:
        return np.array([len(p) for p in self.posts], dtype=np.int64)


class UnfollowMatrix:
    """Sparse binary matrix of dissolution events (value 1 at stored entries)."""

    def __init__(self, num_users: int, entries: Iterable[tuple[int, int]] = ()):
        self.num_users = int(num_users)
        self.entries = frozenset((int(i), int(j)) for i, j in entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, pair) -> bool:
        return (int(pair[0]), int(pair[1])) in self.entries

    def __getitem__(self, pair) -> int:
        return 1 if pair in self else 0

    def __eq__(self, other) -> bool:
        return isinstance(other, UnfollowMatrix) and self.num_users == other.num_users and self.entries == other.entries

    def to_csr(self) -> sp.csr_matrix:
        n = self.num_users
        if not self.entries:
            return sp.csr_matrix((n, n))
        ij = np.array(sorted(self.entries), dtype=np.int64)
        return sp.csr_matrix((np.ones(len(ij)), (ij[:, 0], ij[:, 1])), shape=(n, n))

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def sorted_entries(self) -> list[tuple[int, int]]:
        return sorted(self.entries)


def build_unfollow_matrix(records: Iterable[RelationRecord], num_users: int | None = None) -> UnfollowMatrix:
    records = list(records)
    if num_users is None:
        num_users = 1 + max((max(r.follower, r.followee) for r in records), default=-1)
    return UnfollowMatrix(num_users, ((r.follower, r.followee) for r in records if r.label == UNFOLLOW))


@dataclass
class EvalSet:
    """Labeled (follower, followee, label) pairs with fold indices (-1 = unassigned)."""

    follower: np.ndarray
    followee: np.ndarray
    label: np.ndarray
    fold: np.ndarray = field(default=None)

    def __post_init__(self):
        self.follower = np.asarray(self.follower, dtype=np.int64)
        self.followee = np.asarray(self.followee, dtype=np.int64)
        self.label = np.asarray(self.label, dtype=np.int64)
        if self.fold is None:
            self.fold = np.full(len(self.follower), -1, dtype=np.int64)
        self.fold = np.asarray(self.fold, dtype=np.int64)
        if not (len(self.follower) == len(self.followee) == len(self.label) == len(self.fold)):
            raise ValueError("EvalSet columns differ in length")

    def __len__(self) -> int:
        return len(self.label)

    @property
    def pairs(self) -> np.ndarray:
        return np.stack([self.follower, self.followee], axis=1)

    def pair_set(self) -> set[tuple[int, int]]:
        return set(zip(self.follower.tolist(), self.followee.tolist()))

    def subset(self, index) -> "EvalSet":
        return EvalSet(self.follower[index], self.followee[index], self.label[index], self.fold[index])

    @property
    def num_folds(self) -> int:
        return int(self.fold.max()) + 1 if len(self) else 0

    def to_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("#follower\tfollowee\tlabel\tfold\n")
            for row in zip(self.follower.tolist(), self.followee.tolist(), self.label.tolist(), self.fold.tolist()):
                fh.write("\t".join(map(str, row)) + "\n")

    @classmethod
    def from_tsv(cls, path) -> "EvalSet":
        rows = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 4:
                    raise ParseError(path, lineno, "expected 4 fields")
                rows.append([int(x) for x in parts])
        arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def mask_test_edges(R: UnfollowMatrix, E_test: EvalSet) -> UnfollowMatrix:
    """Zero every evaluation pair in ``R``; all other entries are kept."""
    n = R.num_users
    if len(E_test) and (max(E_test.follower.max(), E_test.followee.max()) >= n or min(E_test.follower.min(), E_test.followee.min()) < 0):
        raise ValueError("evaluation pair references an unknown user")
    return UnfollowMatrix(n, R.entries - E_test.pair_set())


def _hold_target(n_unfollow: int, ratio: float) -> int:
    # round half up; 6790 * (5802/6790) must give exactly 5802
    return int(math.floor(ratio * n_unfollow + 0.5 + 1e-9))


def build_balanced_eval_set(
    records: Sequence[RelationRecord],
    posts: Sequence[Sequence[Post]],
    seed: int,
    hold_ratio: float = PUBLISHED_HOLD_RATIO,
    max_unfollow: int | None = None,
) -> EvalSet:
    """Labeled pairs whose endpoints both posted in the window.

    Every qualifying unfollow edge is included (or a seeded uniform sample
    of ``max_unfollow`` of them when capped); hold edges are sampled
    uniformly without replacement to reach ``hold_ratio`` holds per unfollow.
    """
    has_posts = np.array([len(p) > 0 for p in posts], dtype=bool)
    rng = np.random.default_rng(seed)
    ok = [r for r in records if has_posts[r.follower] and has_posts[r.followee]]
    unf = sorted((r.follower, r.followee) for r in ok if r.label == UNFOLLOW)
    hold = sorted((r.follower, r.followee) for r in ok if r.label == HOLD)
    if max_unfollow is not None and len(unf) > max_unfollow:
        pick = np.sort(rng.choice(len(unf), size=max_unfollow, replace=False))
        unf = [unf[k] for k in pick]
    want = _hold_target(len(unf), hold_ratio)
    if want > len(hold):
        log.warning("only %d hold edges available, %d requested", len(hold), want)
        want = len(hold)
    pick = np.sort(rng.choice(len(hold), size=want, replace=False)) if want else np.array([], dtype=int)
    hold = [hold[k] for k in pick]
    items = sorted([(i, j, UNFOLLOW) for i, j in unf] + [(i, j, HOLD) for i, j in hold])
    arr = np.array(items, dtype=np.int64).reshape(-1, 3)
    return EvalSet(arr[:, 0], arr[:, 1], arr[:, 2])


def kfold_split(E: EvalSet, k: int = 5, seed: int = 0) -> EvalSet:
    """Assign a seeded random permutation of ``E`` to ``k`` folds (sizes differ by <= 1)."""
    if k <= 1:
        raise ValueError("k must be at least 2")
    if len(E) < k:
        raise ValueError(f"need at least k={k} items, got {len(E)}")
    perm = np.random.default_rng(seed).permutation(len(E))
    fold = np.empty(len(E), dtype=np.int64)
    fold[perm] = np.arange(len(E)) % k
    return EvalSet(E.follower.copy(), E.followee.copy(), E.label.copy(), fold)


def fold_sizes(E: EvalSet) -> list[int]:
    return np.bincount(E.fold, minlength=E.num_folds).tolist()
