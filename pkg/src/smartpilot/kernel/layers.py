"""Layer-level forward/backward math on plain float64 arrays.

These primitives are what both the sequential model API (kernel.model) and
the composite architectures (fusion nets, forecasters) are built from. All
functions are pure: caches are returned explicitly, parameters are read-only
inputs, so trained snapshots can serve concurrent inference callers.

Shapes use a leading batch axis: dense ops take [B, D], recurrent ops take
[B, T, D]. LSTM is the standard 4-gate cell with gate order (i, f, g, o) in
the stacked weight matrix W = [Wx | Wh] of shape [4H, D+H].
"""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity", "softmax")


def act_forward(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "softmax":
        shifted = z - z.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    raise ValueError(f"unknown activation {name!r}")


def act_backward(name: str, da: np.ndarray, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Gradient through the activation: da is d(loss)/d(a), returns d(loss)/d(z)."""
    if name == "identity":
        return da
    if name == "relu":
        return da * (z > 0.0)
    if name == "tanh":
        return da * (1.0 - a * a)
    if name == "sigmoid":
        return da * a * (1.0 - a)
    if name == "softmax":
        # Jacobian-vector product; the cross-entropy path never comes through
        # here (it is fused on the logits), so this only serves odd pairings
        # like mse-on-probabilities.
        inner = (da * a).sum(axis=-1, keepdims=True)
        return a * (da - inner)
    raise ValueError(f"unknown activation {name!r}")


def dense_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, activation: str):
    """x [B, I] -> a [B, O]; returns (a, cache)."""
    z = x @ W.T + b
    a = act_forward(activation, z)
    return a, (x, z, a)


def dense_backward(da: np.ndarray, W: np.ndarray, activation: str, cache):
    x, z, a = cache
    dz = act_backward(activation, da, z, a)
    dW = dz.T @ x
    db = dz.sum(axis=0)
    dx = dz @ W
    return dx, dW, db


def dense_backward_from_dz(dz: np.ndarray, W: np.ndarray, cache):
    """Backward given d(loss)/d(z) directly (fused softmax+cross-entropy path)."""
    x, _, _ = cache
    dW = dz.T @ x
    db = dz.sum(axis=0)
    dx = dz @ W
    return dx, dW, db


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def lstm_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray):
    """x [B, T, I] -> hidden sequence [B, T, H]; returns (h_seq, cache).

    Zero initial state. Gate pre-activations per step:
        z_t = [x_t, h_{t-1}] @ W.T + b,  split into (i, f, g, o).
    """
    B, T, I = x.shape
    H = W.shape[0] // 4
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    h_seq = np.empty((B, T, H))
    gates = []
    cells = []
    for t in range(T):
        xt = x[:, t, :]
        z = xt @ W[:, :I].T + h @ W[:, I:].T + b
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        c_prev = c
        c = f * c_prev + i * g
        h = o * np.tanh(c)
        h_seq[:, t, :] = h
        gates.append((i, f, g, o))
        cells.append((c_prev, c))
    return h_seq, (x, h_seq, gates, cells)


def lstm_backward(dh_seq: np.ndarray, W: np.ndarray, cache):
    """Backprop through time. dh_seq [B, T, H] is the gradient on every h_t."""
    x, h_seq, gates, cells = cache
    B, T, I = x.shape
    H = W.shape[0] // 4
    dW = np.zeros_like(W)
    db = np.zeros(4 * H)
    dx = np.zeros_like(x)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i, f, g, o = gates[t]
        c_prev, c = cells[t]
        tc = np.tanh(c)
        dh = dh_seq[:, t, :] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        df = dc * c_prev
        di = dc * g
        dg = dc * i
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        h_prev = h_seq[:, t - 1, :] if t > 0 else np.zeros((B, H))
        xh = np.concatenate([x[:, t, :], h_prev], axis=1)
        dW += dz.T @ xh
        db += dz.sum(axis=0)
        dxh = dz @ W
        dx[:, t, :] = dxh[:, :I]
        dh_next = dxh[:, I:]
        dc_next = dc * f
    return dx, dW, db
