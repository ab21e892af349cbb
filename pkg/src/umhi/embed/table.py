"""Embedding tables and their plain-text file format."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass
class EmbeddingTable:
    """Row ``k`` of ``vectors`` belongs to ``ids[k]`` (dense ints when ids is None)."""

    vectors: np.ndarray
    ids: list[str] | None = None
    _index: dict = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be 2-D")
        if self.ids is not None and len(self.ids) != len(self.vectors):
            raise ValueError("ids and vectors differ in length")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.vectors)

    def index(self, key) -> int | None:
        if self.ids is None:
            return int(key) if 0 <= int(key) < len(self) else None
        if self._index is None:
            self._index = {k: n for n, k in enumerate(self.ids)}
        return self._index.get(key)

    def __getitem__(self, key) -> np.ndarray:
        k = self.index(key)
        if k is None:
            raise KeyError(key)
        return self.vectors[k]

    def lookup(self, key) -> np.ndarray:
        """Vector for ``key``, or zeros when it is unknown."""
        k = self.index(key)
        return self.vectors[k] if k is not None else np.zeros(self.dim)

    def cosine(self, a, b) -> float:
        x, y = self[a], self[b]
        den = np.linalg.norm(x) * np.linalg.norm(y)
        return float(x @ y / den) if den > 0 else 0.0


def write_embeddings(path, table: EmbeddingTable) -> None:
    ids = table.ids if table.ids is not None else [str(k) for k in range(len(table))]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for name, vec in zip(ids, table.vectors):
            fh.write(name + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def read_embeddings(path, dense_ids: bool = False) -> EmbeddingTable:
    """Inverse of :func:`write_embeddings`; ``dense_ids`` expects ids 0..n-1 in order."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad header")
        count, dim = int(header[0]), int(header[1])
        ids: list[str] = []
        vecs = np.empty((count, dim))
        for k in range(count):
            parts = fh.readline().rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{k + 2}: expected {dim + 1} fields")
            ids.append(parts[0])
            vecs[k] = [float(x) for x in parts[1:]]
    if dense_ids:
        if ids != [str(k) for k in range(count)]:
            raise ValueError(f"{path}: ids are not dense 0..{count - 1}")
        return EmbeddingTable(vecs)
    return EmbeddingTable(vecs, ids)


def cosine_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = vectors / np.where(norms > 0, norms, 1.0)
    return unit @ unit.T


def block_cosine_gap(vectors: np.ndarray, blocks: Sequence[int]) -> float:
    """Mean intra-block cosine minus mean inter-block cosine (self-pairs excluded)."""
    blocks = np.asarray(blocks)
    cos = cosine_matrix(vectors)
    same = blocks[:, None] == blocks[None, :]
    off = ~np.eye(len(blocks), dtype=bool)
    return float(cos[same & off].mean() - cos[~same].mean())
