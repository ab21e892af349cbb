"""Hierarchical attention encoder: words -> post vector -> user vector.

A bidirectional LSTM with attention pools each post's word vectors into
``s`` (2H); a second one pools a user's chronologically ordered post
vectors into ``m`` (2H). Word vectors are looked up from a frozen table.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..embed.table import EmbeddingTable
from ..graph import Post
from ..optim import Adam
from .lstm import (
    attention_backward,
    attention_forward,
    bilstm_backward,
    bilstm_forward,
)
from .tokenize import tokenize

log = logging.getLogger(__name__)

T_MAX = 100
L_MAX = 50

ENCODER_PARAMS = (
    "word_f_W", "word_f_b", "word_b_W", "word_b_b", "word_att_W", "word_att_b", "word_att_c",
    "post_f_W", "post_f_b", "post_b_W", "post_b_b", "post_att_W", "post_att_b", "post_att_c",
)
HEAD_PARAMS = ("out_w", "out_b")


@dataclass
class TokenizedPost:
    tokens: np.ndarray  # word ids, -1 for out-of-vocabulary
    time: int = 0

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        if len(self.tokens) < 1:
            raise ValueError("a tokenized post needs at least one token")


class ContentEncoderParams:
    """Weights of the two-level encoder plus the pretraining output layer."""

    def __init__(self, arrays: dict[str, np.ndarray], word_vectors: EmbeddingTable,
                 t_max: int = T_MAX, l_max: int = L_MAX, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.arrays = {k: np.asarray(v, dtype=self.dtype) for k, v in arrays.items()}
        self.word_vectors = word_vectors
        self.t_max = t_max
        self.l_max = l_max
        self._table = None

    @property
    def word_table(self) -> np.ndarray:
        """Word vectors in the working precision (float32 training is ~2x faster)."""
        if self._table is None or self._table.dtype != self.dtype:
            self._table = np.asarray(self.word_vectors.vectors, dtype=self.dtype)
        return self._table

    @classmethod
    def initialize(cls, word_vectors: EmbeddingTable, hidden: int = 100, attention_dim: int = 100,
                   seed: int = 0, scale: float = 0.08, dtype=np.float64, **kw) -> "ContentEncoderParams":
        rng = np.random.default_rng(seed)
        N, H, A = word_vectors.dim, hidden, attention_dim

        def u(*shape):
            return rng.uniform(-scale, scale, size=shape)

        arrays = {
            "word_f_W": u(4 * H, N + H), "word_f_b": u(4 * H),
            "word_b_W": u(4 * H, N + H), "word_b_b": u(4 * H),
            "word_att_W": u(A, 2 * H), "word_att_b": u(A), "word_att_c": u(A),
            "post_f_W": u(4 * H, 3 * H), "post_f_b": u(4 * H),
            "post_b_W": u(4 * H, 3 * H), "post_b_b": u(4 * H),
            "post_att_W": u(A, 2 * H), "post_att_b": u(A), "post_att_c": u(A),
            "out_w": u(4 * H), "out_b": np.zeros(1),
        }
        return cls(arrays, word_vectors, dtype=dtype, **kw)

    @property
    def hidden(self) -> int:
        return self.arrays["word_f_b"].shape[0] // 4

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "ContentEncoderParams":
        return ContentEncoderParams({k: v.copy() for k, v in self.arrays.items()}, self.word_vectors,
                                    self.t_max, self.l_max, self.dtype)

    def save(self, path) -> None:
        np.savez(path, **self.arrays, _shape=np.array([self.t_max, self.l_max]))

    @classmethod
    def load(cls, path, word_vectors: EmbeddingTable) -> "ContentEncoderParams":
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files if not k.startswith("_")}
            t_max, l_max = (int(x) for x in data["_shape"])
        missing = set(ENCODER_PARAMS + HEAD_PARAMS) - set(arrays)
        if missing:
            raise ValueError(f"{path}: missing parameters {sorted(missing)}")
        return cls(arrays, word_vectors, t_max, l_max, arrays["out_w"].dtype)


def tokenize_posts(posts: Sequence[Post], vocab_index, t_max: int = T_MAX, l_max: int = L_MAX) -> list[TokenizedPost]:
    """Chronological token-id posts; empty ones dropped, keep the latest ``l_max``."""
    out = []
    for p in sorted(posts, key=lambda p: p.time):
        toks = tokenize(p.text)[:t_max]
        if toks:
            out.append(TokenizedPost([vocab_index.get(w, -1) for w in toks], p.time))
    return out[-l_max:]


def _pad(seqs: list[np.ndarray], dim: int, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    X = np.zeros((len(seqs), int(lengths.max()), dim), dtype)
    for k, s in enumerate(seqs):
        X[k, :len(s)] = s
    return X, lengths


class _Forward:
    """Cached forward pass over a batch of users (each a list of TokenizedPost)."""

    def __init__(self, params: ContentEncoderParams, users: Sequence[Sequence[TokenizedPost]], word_input=None):
        p = params.arrays
        self.params = params
        table = params.word_table
        posts = [tp for user in users for tp in user[-params.l_max:]]
        self.n_posts = [min(len(user), params.l_max) for user in users]
        if min(self.n_posts, default=0) < 1:
            raise ValueError("every user needs at least one post")
        self.token_ids = [tp.tokens[:params.t_max] for tp in posts]
        if word_input is None:
            seqs = [np.where(ids[:, None] >= 0, table[np.maximum(ids, 0)], 0.0) for ids in self.token_ids]
        else:
            seqs = word_input
        X, self.t_len = _pad(seqs, table.shape[1], params.dtype)
        self.X = X
        Hw, self.c_wlstm = bilstm_forward(p["word_f_W"], p["word_f_b"], p["word_b_W"], p["word_b_b"], X, self.t_len)
        self.word_mask = np.arange(X.shape[1])[None, :] < self.t_len[:, None]
        S, self.word_alpha, self.c_watt = attention_forward(p["word_att_W"], p["word_att_b"], p["word_att_c"],
                                                            Hw, self.word_mask)
        self.S = S
        offsets = np.concatenate([[0], np.cumsum(self.n_posts)])
        self.offsets = offsets
        Sp, self.l_len = _pad([S[offsets[u]:offsets[u + 1]] for u in range(len(users))], S.shape[1], params.dtype)
        Hp, self.c_plstm = bilstm_forward(p["post_f_W"], p["post_f_b"], p["post_b_W"], p["post_b_b"], Sp, self.l_len)
        self.post_hidden = Hp
        self.post_mask = np.arange(Sp.shape[1])[None, :] < self.l_len[:, None]
        M, self.post_alpha, self.c_patt = attention_forward(p["post_att_W"], p["post_att_b"], p["post_att_c"],
                                                            Hp, self.post_mask)
        self.M = M

    def backward(self, dM) -> tuple[dict[str, np.ndarray], list[np.ndarray]]:
        """Encoder gradients and per-post gradients w.r.t. the word vectors."""
        g: dict[str, np.ndarray] = {}
        g["post_att_W"], g["post_att_b"], g["post_att_c"], dHp = attention_backward(dM, self.c_patt)
        g["post_f_W"], g["post_f_b"], g["post_b_W"], g["post_b_b"], dSp = bilstm_backward(dHp, self.c_plstm)
        dS = np.concatenate([dSp[u, :n] for u, n in enumerate(self.n_posts)])
        g["word_att_W"], g["word_att_b"], g["word_att_c"], dHw = attention_backward(dS, self.c_watt)
        g["word_f_W"], g["word_f_b"], g["word_b_W"], g["word_b_b"], dX = bilstm_backward(dHw, self.c_wlstm)
        return g, [dX[k, :n] for k, n in enumerate(self.t_len)]


def encode_post(post: TokenizedPost, params: ContentEncoderParams) -> np.ndarray:
    """Post vector ``s`` (2H): attention-pooled word-level BiLSTM states."""
    fwd = _Forward(params, [[post]])
    return fwd.S[0].copy()


def word_attention(post: TokenizedPost, params: ContentEncoderParams) -> np.ndarray:
    return _Forward(params, [[post]]).word_alpha[0, :min(len(post.tokens), params.t_max)].copy()


def encode_user(posts: Sequence[TokenizedPost], params: ContentEncoderParams) -> np.ndarray:
    """User vector ``m`` (2H) from chronologically ordered posts (latest ``l_max`` kept)."""
    if len(posts) == 0:
        raise ValueError("user has no usable posts")
    return _Forward(params, [list(posts)]).M[0].copy()


def encode_users(user_posts: Sequence[Sequence[TokenizedPost]], params: ContentEncoderParams,
                 users=None, batch_users: int = 256) -> np.ndarray:
    """Stack of user vectors for ``users`` (default all); users without posts get zeros."""
    n = len(user_posts)
    users = np.arange(n) if users is None else np.unique(np.asarray(users, dtype=np.int64))
    out = np.zeros((n, params.output_dim), params.dtype)
    users = [u for u in users.tolist() if len(user_posts[u]) > 0]
    for k in range(0, len(users), batch_users):
        chunk = users[k:k + batch_users]
        out[chunk] = _Forward(params, [user_posts[u] for u in chunk]).M
    return out


def _pair_logits(params, M, row_i, row_j):
    H2 = M.shape[1]
    w = params.arrays["out_w"]
    return M[row_i] @ w[:H2] + M[row_j] @ w[H2:] + params.arrays["out_b"][0]


def pair_loss_and_grads(params: ContentEncoderParams, user_posts, pairs_i, pairs_j, labels,
                        with_word_grads: bool = False):
    """Mean binary cross-entropy of ``sigmoid(w . (m_i + m_j) + b)`` and its gradients.

    Each distinct user in the batch is encoded once. With
    ``with_word_grads`` the gradient w.r.t. the word-vector table is
    returned as ``grads["word_vectors"]``.
    """
    pairs_i = np.asarray(pairs_i)
    pairs_j = np.asarray(pairs_j)
    y = np.asarray(labels, dtype=params.dtype)
    uniq, inv = np.unique(np.concatenate([pairs_i, pairs_j]), return_inverse=True)
    row_i, row_j = inv[:len(pairs_i)], inv[len(pairs_i):]
    fwd = _Forward(params, [user_posts[u] for u in uniq])
    z = _pair_logits(params, fwd.M, row_i, row_j)
    # log(1 + e^-|z|) form is stable for large |z|
    loss = np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z))))
    p = 0.5 * (np.tanh(0.5 * z) + 1.0)
    dz = (p - y) / len(y)
    H2 = fwd.M.shape[1]
    w = params.arrays["out_w"]
    grads = {"out_w": np.concatenate([dz @ fwd.M[row_i], dz @ fwd.M[row_j]]), "out_b": np.array([dz.sum()])}
    dM = np.zeros_like(fwd.M)
    np.add.at(dM, row_i, dz[:, None] * w[None, :H2])
    np.add.at(dM, row_j, dz[:, None] * w[None, H2:])
    enc, dwords = fwd.backward(dM)
    grads.update(enc)
    if with_word_grads:
        table = params.word_vectors.vectors
        dtable = np.zeros_like(table)
        for ids, d in zip(fwd.token_ids, dwords):
            keep = ids >= 0
            np.add.at(dtable, ids[keep], d[keep].astype(dtable.dtype))
        grads["word_vectors"] = dtable
    return float(loss), grads


def pair_scores(params: ContentEncoderParams, user_posts, pairs_i, pairs_j, batch_users: int = 256) -> np.ndarray:
    M = encode_users(user_posts, params, np.concatenate([pairs_i, pairs_j]), batch_users)
    H2 = M.shape[1]
    w = params.arrays["out_w"]
    z = M[pairs_i] @ w[:H2] + M[pairs_j] @ w[H2:] + params.arrays["out_b"][0]
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def pretrain_content_encoder(
    pairs_i,
    pairs_j,
    labels,
    user_posts: Sequence[Sequence[TokenizedPost]],
    params: ContentEncoderParams,
    epochs: int = 10,
    lr: float = 0.001,
    betas: tuple[float, float] = (0.1, 0.001),
    batch: int = 64,
    val_fraction: float = 0.1,
    seed: int = 0,
    audit=None,
    history: list | None = None,
) -> ContentEncoderParams:
    """Train the encoder as a content-only edge classifier.

    Mini-batches hold equal numbers of positives and negatives drawn with
    replacement; an epoch is ``ceil(n_train / batch)`` updates. Returns a
    copy of the parameters with the best validation AUC over epochs.
    """
    from ..evaluation.metrics import auc_score
    from ..sampling import BalancedSampler, split_validation

    pairs_i = np.asarray(pairs_i, dtype=np.int64)
    pairs_j = np.asarray(pairs_j, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    tr, va = split_validation(labels, val_fraction, rng)
    if audit is not None:
        audit.record("content-encoder", pairs_i, pairs_j)
    params = params.copy()
    if epochs <= 0:
        return params
    sampler = BalancedSampler(labels[tr], batch, rng)
    opt = Adam({k: params.arrays[k] for k in ENCODER_PARAMS + HEAD_PARAMS}, lr=lr, betas=betas)
    steps = max(1, -(-len(tr) // batch))
    best, best_auc = params.copy(), -np.inf
    for epoch in range(epochs):
        losses = []
        for _ in range(steps):
            idx = tr[sampler.draw()]
            loss, grads = pair_loss_and_grads(params, user_posts, pairs_i[idx], pairs_j[idx], labels[idx])
            opt.step(grads)
            losses.append(loss)
        if len(va) and len(np.unique(labels[va])) == 2:
            score = auc_score(pair_scores(params, user_posts, pairs_i[va], pairs_j[va]), labels[va])
        else:
            score = -float(np.mean(losses))
        log.info("content encoder epoch %d: loss %.4f val %.4f", epoch + 1, np.mean(losses), score)
        if history is not None:
            history.append({"epoch": epoch + 1, "loss": float(np.mean(losses)), "val_auc": float(score),
                            "first_loss": float(losses[0])})
        if score > best_auc:
            best, best_auc = params.copy(), score
    return best
