"""LSTM sequence op with fused backpropagation through time."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError
from .tensor import Tensor, _make, as_tensor, concat, flip


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_seq(x: Tensor, w_in: Tensor, w_rec: Tensor, bias: Tensor) -> Tensor:
    """Run an LSTM over (batch, time, features), returning all hidden states.

    w_in: (4H, F); w_rec: (4H, H); bias: (4H,).  Gate order along the 4H
    axis is input, forget, candidate, output.  Initial hidden and cell
    states are zero.  The whole sequence is one tape node; backward
    replays the recurrence in reverse.
    """
    x, w_in, w_rec, bias = map(as_tensor, (x, w_in, w_rec, bias))
    if x.ndim != 3:
        raise ShapeMismatchError(f"lstm expects (batch, time, features), got {x.shape}")
    batch, steps, feat = x.shape
    four_h = w_in.shape[0]
    if four_h % 4:
        raise ShapeMismatchError(f"w_in rows must be 4*hidden, got {four_h}")
    hidden = four_h // 4
    if w_in.shape != (four_h, feat) or w_rec.shape != (four_h, hidden) or bias.shape != (four_h,):
        raise ShapeMismatchError(
            f"lstm weights {w_in.shape}/{w_rec.shape}/{bias.shape} "
            f"inconsistent with features {feat}"
        )

    # Input contributions for all steps at once; recurrence is per step.
    z_in = np.einsum("btf,gf->btg", x.data, w_in.data, optimize=True) + bias.data
    i_all = np.empty((steps, batch, hidden))
    f_all = np.empty_like(i_all)
    c_bar = np.empty_like(i_all)
    o_all = np.empty_like(i_all)
    c_all = np.empty_like(i_all)
    tanh_c = np.empty_like(i_all)
    h_all = np.zeros((steps, batch, hidden))
    h_prev = np.zeros((batch, hidden))
    c_prev = np.zeros((batch, hidden))
    for t in range(steps):
        z = z_in[:, t, :] + h_prev @ w_rec.data.T
        i_all[t] = _sigmoid(z[:, :hidden])
        f_all[t] = _sigmoid(z[:, hidden : 2 * hidden])
        c_bar[t] = np.tanh(z[:, 2 * hidden : 3 * hidden])
        o_all[t] = _sigmoid(z[:, 3 * hidden :])
        c_prev = f_all[t] * c_prev + i_all[t] * c_bar[t]
        c_all[t] = c_prev
        tanh_c[t] = np.tanh(c_prev)
        h_prev = o_all[t] * tanh_c[t]
        h_all[t] = h_prev
    out = np.ascontiguousarray(h_all.transpose(1, 0, 2))

    def backward(g):
        dw_in = np.zeros_like(w_in.data)
        dw_rec = np.zeros_like(w_rec.data)
        db = np.zeros_like(bias.data)
        dx = np.zeros_like(x.data)
        dh = np.zeros((batch, hidden))
        dc = np.zeros((batch, hidden))
        for t in range(steps - 1, -1, -1):
            dh = dh + g[:, t, :]
            do = dh * tanh_c[t]
            dc = dc + dh * o_all[t] * (1.0 - tanh_c[t] ** 2)
            di = dc * c_bar[t]
            dcb = dc * i_all[t]
            cm1 = c_all[t - 1] if t > 0 else np.zeros((batch, hidden))
            df = dc * cm1
            dz = np.concatenate(
                [
                    di * i_all[t] * (1.0 - i_all[t]),
                    df * f_all[t] * (1.0 - f_all[t]),
                    dcb * (1.0 - c_bar[t] ** 2),
                    do * o_all[t] * (1.0 - o_all[t]),
                ],
                axis=1,
            )
            hm1 = h_all[t - 1] if t > 0 else np.zeros((batch, hidden))
            dw_in += dz.T @ x.data[:, t, :]
            dw_rec += dz.T @ hm1
            db += dz.sum(axis=0)
            dx[:, t, :] = dz @ w_in.data
            dh = dz @ w_rec.data
            dc = dc * f_all[t]
        if x.requires_grad:
            x._accumulate(dx)
        if w_in.requires_grad:
            w_in._accumulate(dw_in)
        if w_rec.requires_grad:
            w_rec._accumulate(dw_rec)
        if bias.requires_grad:
            bias._accumulate(db)

    return _make(out, (x, w_in, w_rec, bias), backward)


def blstm(x: Tensor, forward_params, backward_params) -> Tensor:
    """Bidirectional LSTM: per-frame concat of forward and time-reversed
    backward hidden states, (batch, time, 2H).

    Each params argument is a (w_in, w_rec, bias) triple.
    """
    fwd = lstm_seq(x, *forward_params)
    bwd = flip(lstm_seq(flip(x, axis=1), *backward_params), axis=1)
    return concat([fwd, bwd], axis=2)
