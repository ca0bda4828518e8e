"""Inference-only bidirectional LSTM in numpy (float64)."""

from __future__ import annotations

import numpy as np


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split form avoids overflow warnings for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


sigmoid = _sigmoid


def lstm_direction(x: np.ndarray, W_ih, W_hh, b_ih, b_hh, reverse: bool = False) -> np.ndarray:
    """Run one LSTM direction over ``x`` of shape (T, in); returns (T, H)."""
    W_ih = np.asarray(W_ih, dtype=np.float64)
    W_hh = np.asarray(W_hh, dtype=np.float64)
    H = W_hh.shape[1]
    pre = x @ W_ih.T + (np.asarray(b_ih, dtype=np.float64) + np.asarray(b_hh, dtype=np.float64))
    T = x.shape[0]
    h = np.zeros(H)
    c = np.zeros(H)
    out = np.empty((T, H))
    steps = range(T - 1, -1, -1) if reverse else range(T)
    W_hh_T = W_hh.T
    for t in steps:
        g = pre[t] + h @ W_hh_T
        i = _sigmoid(g[:H])
        f = _sigmoid(g[H:2 * H])
        cand = np.tanh(g[2 * H:3 * H])
        o = _sigmoid(g[3 * H:])
        c = f * c + i * cand
        h = o * np.tanh(c)
        out[t] = h
    return out


def bilstm(x: np.ndarray, weights, prefix: str, layers: int = 2) -> np.ndarray:
    """Stacked bidirectional LSTM; each layer consumes the previous layer's
    concatenated [forward, backward] output. Returns (T, 2H)."""
    h = np.asarray(x, dtype=np.float64)
    for layer in range(1, layers + 1):
        parts = []
        for direction, rev in (("fwd", False), ("bwd", True)):
            base = f"{prefix}.l{layer}.{direction}"
            parts.append(lstm_direction(
                h, weights[f"{base}.W_ih"], weights[f"{base}.W_hh"],
                weights[f"{base}.b_ih"], weights[f"{base}.b_hh"], reverse=rev,
            ))
        h = np.concatenate(parts, axis=1)
    return h
