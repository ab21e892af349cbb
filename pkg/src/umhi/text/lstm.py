"""Batched bidirectional LSTM and additive attention with manual backprop.

Sequences are right-padded to a common length; padded steps never feed
valid outputs and receive zero upstream gradient, so they are inert.
Gate order inside the stacked weights is input, forget, output, candidate.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _recur_forward(XW, WhT):
    T, B, G = XW.shape
    H = G // 4
    hs = np.zeros((T + 1, B, H), XW.dtype)
    cs = np.zeros((T + 1, B, H), XW.dtype)
    gates = np.empty((T, B, G), XW.dtype)
    for t in range(T):
        z = XW[t] + hs[t] @ WhT
        g = gates[t]
        g[:, :3 * H] = _sigmoid(z[:, :3 * H])
        g[:, 3 * H:] = np.tanh(z[:, 3 * H:])
        cs[t + 1] = g[:, H:2 * H] * cs[t] + g[:, :H] * g[:, 3 * H:]
        hs[t + 1] = g[:, 2 * H:3 * H] * np.tanh(cs[t + 1])
    return hs, cs, gates


def _recur_backward(dH, cs, gates, Wh):
    T, B, H = dH.shape
    dZ = np.empty((T, B, 4 * H), dH.dtype)
    dh = np.zeros((B, H), dH.dtype)
    dc = np.zeros((B, H), dH.dtype)
    for t in range(T - 1, -1, -1):
        g = gates[t]
        i, f, o, gg = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        dh = dh + dH[t]
        tc = np.tanh(cs[t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = dZ[t]
        dz[:, :H] = dc * gg * i * (1.0 - i)
        dz[:, H:2 * H] = dc * cs[t] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H:] = dc * i * (1.0 - gg * gg)
        dc = dc * f
        dh = dz @ Wh
    return dZ


def lstm_forward(W, b, X):
    """Run an LSTM over ``X`` (B, T, D); ``W`` is (4H, D + H)."""
    B, T, D = X.shape
    Wx, Wh = W[:, :D], W[:, D:]
    XW = np.ascontiguousarray((X @ Wx.T + b).transpose(1, 0, 2))
    hs, cs, gates = _recur_forward(XW, np.ascontiguousarray(Wh.T))
    return hs[1:].transpose(1, 0, 2), (W, X, hs, cs, gates)


def lstm_backward(dH, cache):
    """Gradients ``(dW, db, dX)`` given upstream ``dH`` (B, T, H)."""
    W, X, hs, cs, gates = cache
    B, T, D = X.shape
    H = W.shape[0] // 4
    dZ = _recur_backward(np.ascontiguousarray(dH.transpose(1, 0, 2)), cs, gates, np.ascontiguousarray(W[:, D:]))
    flat = dZ.reshape(-1, 4 * H)
    dW = np.empty_like(W)
    dW[:, :D] = flat.T @ X.transpose(1, 0, 2).reshape(-1, D)
    dW[:, D:] = flat.T @ hs[:-1].reshape(-1, H)
    db = flat.sum(axis=0)
    dX = (dZ @ W[:, :D]).transpose(1, 0, 2)
    return dW, db, dX


def reverse_index(lengths, T):
    """Per-row index that reverses the first ``length`` steps and fixes padding."""
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def bilstm_forward(Wf, bf, Wb, bb, X, lengths):
    """Concatenated forward and backward hidden states, (B, T, 2H)."""
    B, T, _ = X.shape
    rev = reverse_index(lengths, T)
    rows = np.arange(B)[:, None]
    Hf, cf = lstm_forward(Wf, bf, X)
    Hb_rev, cb = lstm_forward(Wb, bb, X[rows, rev])
    Hb = Hb_rev[rows, rev]
    return np.concatenate([Hf, Hb], axis=2), (cf, cb, rev)


def bilstm_backward(dHcat, cache):
    cf, cb, rev = cache
    H = dHcat.shape[2] // 2
    rows = np.arange(dHcat.shape[0])[:, None]
    dWf, dbf, dXf = lstm_backward(np.ascontiguousarray(dHcat[:, :, :H]), cf)
    dWb, dbb, dXb_rev = lstm_backward(dHcat[:, :, H:][rows, rev], cb)
    return dWf, dbf, dWb, dbb, dXf + dXb_rev[rows, rev]


def attention_forward(Wa, ba, ctx, Hs, mask):
    """``alpha ~ exp(tanh(Wa h + ba) . ctx)`` over valid steps; returns (pooled, alpha, cache)."""
    U = np.tanh(Hs @ Wa.T + ba)
    score = U @ ctx
    score = np.where(mask, score, -np.inf)
    score = score - score.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(score), 0.0)
    alpha = e / e.sum(axis=1, keepdims=True)
    pooled = np.einsum("bt,bth->bh", alpha, Hs)
    return pooled, alpha, (Wa, ctx, Hs, U, alpha)


def attention_backward(dpooled, cache):
    Wa, ctx, Hs, U, alpha = cache
    dalpha = np.einsum("bth,bh->bt", Hs, dpooled)
    dHs = alpha[:, :, None] * dpooled[:, None, :]
    dscore = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    dctx = np.einsum("bt,bta->a", dscore, U)
    dpre = dscore[:, :, None] * ctx[None, None, :] * (1.0 - U * U)
    A = Wa.shape[0]
    dWa = dpre.reshape(-1, A).T @ Hs.reshape(-1, Hs.shape[2])
    dba = dpre.reshape(-1, A).sum(axis=0)
    dHs += dpre @ Wa
    return dWa, dba, dctx, dHs
