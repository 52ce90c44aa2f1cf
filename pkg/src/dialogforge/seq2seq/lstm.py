"""Masked single-layer LSTM over a padded batch, forward and backward.

Gate order in the packed ``4H`` axis is input, forget, output, candidate.
Where ``mask[b, s] == 0`` the step is a no-op: state is carried unchanged, so
the final state of a row is the state after its last real token.
"""
from __future__ import annotations

import numpy as np


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def lstm_forward(zx, Wh, h0, c0, mask):
    """Run the recurrence given precomputed input projections.

    zx: (B, L, 4H) input projection including bias; Wh: (H, 4H);
    h0, c0: (B, H); mask: (B, L) of 0/1.
    Returns (hs, h, c, cache) where hs[:, s] is the (masked) output state.
    """
    B, L, H4 = zx.shape
    H = H4 // 4
    hs = np.empty((B, L, H))
    gates = np.empty((B, L, H4))
    c_prev_all = np.empty((B, L, H))
    h_prev_all = np.empty((B, L, H))
    tanh_c = np.empty((B, L, H))
    h, c = h0, c0
    for s in range(L):
        z = zx[:, s] + h @ Wh
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        o = sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, s, None]
        h_prev_all[:, s] = h
        c_prev_all[:, s] = c
        gates[:, s, :H], gates[:, s, H:2 * H], gates[:, s, 2 * H:3 * H], gates[:, s, 3 * H:] = i, f, o, g
        tanh_c[:, s] = tc
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
        hs[:, s] = h
    cache = (gates, c_prev_all, h_prev_all, tanh_c, mask, Wh)
    return hs, h, c, cache


def lstm_backward(dhs, dh_final, dc_final, cache):
    """Backpropagate through :func:`lstm_forward`.

    dhs: (B, L, H) loss gradient w.r.t. each output state (beyond the
    recurrence); dh_final, dc_final: gradient w.r.t. the final state.
    Returns (dzx, dWh, dh0, dc0).
    """
    gates, c_prev_all, h_prev_all, tanh_c, mask, Wh = cache
    B, L, H4 = gates.shape
    H = H4 // 4
    dzx = np.zeros((B, L, H4))
    dh, dc = dh_final, dc_final
    WhT = Wh.T
    for s in range(L - 1, -1, -1):
        dh_out = dh + dhs[:, s] if dhs is not None else dh
        m = mask[:, s, None]
        dh_new = m * dh_out
        dc_new = m * dc
        i, f, o, g = (gates[:, s, k * H:(k + 1) * H] for k in range(4))
        tc = tanh_c[:, s]
        dc_new = dc_new + dh_new * o * (1.0 - tc * tc)
        dz = dzx[:, s]
        dz[:, :H] = dc_new * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc_new * c_prev_all[:, s] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dh_new * tc * o * (1.0 - o)
        dz[:, 3 * H:] = dc_new * i * (1.0 - g * g)
        dh = (1.0 - m) * dh_out + dz @ WhT
        dc = (1.0 - m) * dc + dc_new * f
    dWh = np.einsum("blh,blk->hk", h_prev_all, dzx)
    return dzx, dWh, dh, dc
