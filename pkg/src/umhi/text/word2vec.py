"""Skip-gram word vectors over tokenized posts."""

from __future__ import annotations

from collections import Counter
from typing import Sequence

from ..embed.skipgram import train_sgns
from ..embed.table import EmbeddingTable


def build_vocabulary(corpus: Sequence[Sequence[str]]) -> list[str]:
    """Distinct tokens ordered by descending count, then lexicographically."""
    counts = Counter(tok for sent in corpus for tok in sent)
    return sorted(counts, key=lambda w: (-counts[w], w))


def train_word_vectors(
    corpus: Sequence[Sequence[str]],
    dim: int = 100,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    lr0: float = 0.025,
    seed: int = 0,
    workers: int = 1,
) -> EmbeddingTable:
    vocab = build_vocabulary(corpus)
    if not vocab:
        raise ValueError("empty vocabulary")
    index = {w: k for k, w in enumerate(vocab)}
    sequences = [[index[w] for w in sent] for sent in corpus if sent]
    W = train_sgns(sequences, len(vocab), dim=dim, window=window, negatives=negatives,
                   epochs=epochs, lr0=lr0, seed=seed, workers=workers)
    return EmbeddingTable(W, vocab)


def write_vocabulary(path, vocab: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for w in vocab:
            fh.write(w + "\n")


def read_vocabulary(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]
