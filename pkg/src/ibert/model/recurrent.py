"""LSTM cell and bidirectional scans.

Gate order in the packed weight matrices is i|f|g|o along the last axis:
``wx [d_in, 4h]``, ``wh [h, 4h]``, ``b [4h]``. The scan over time is a
single fused tape entry per direction: the forward loop caches per-step
gate activations, and the backward rule runs truncated-free BPTT over the
same caches. ``lstm_cell_step`` exposes one step as its own tape op so the
scan can be cross-checked against an explicit unrolled composition.
"""

import numpy as np

from ibert.errors import ShapeError
from ibert.numerics.ops import _sigmoid_raw, concat
from ibert.numerics.tensor import Tensor, _wrap, accumulate, check_finite, record


def _cell_forward(x_t, h_prev, c_prev, wx, wh, b):
    """One LSTM step on raw arrays; returns (h, c, cache)."""
    h_dim = wh.shape[0]
    z = x_t @ wx + h_prev @ wh + b
    i = _sigmoid_raw(z[:, :h_dim])
    f = _sigmoid_raw(z[:, h_dim : 2 * h_dim])
    g = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
    o = _sigmoid_raw(z[:, 3 * h_dim :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (i, f, g, o, c_prev, tc)


def _cell_backward(dh, dc, cache, x_t, h_prev, wx, wh):
    """Gradients of one step. Returns (dx_t, dh_prev, dc_prev, dwx, dwh, db)."""
    i, f, g, o, c_prev, tc = cache
    do = dh * tc
    dct = dh * o * (1.0 - tc * tc) + dc
    di = dct * g
    df = dct * c_prev
    dg = dct * i
    dc_prev = dct * f
    dz = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)],
        axis=1,
    )
    dx_t = dz @ wx.T
    dh_prev = dz @ wh.T
    dwx = x_t.T @ dz
    dwh = h_prev.T @ dz
    db = dz.sum(axis=0)
    return dx_t, dh_prev, dc_prev, dwx, dwh, db


def lstm_cell_step(x_t, h_prev, c_prev, wx, wh, b):
    """Single LSTM step as a tape op: (x_t, h_prev, c_prev) -> (h_t, c_t)."""
    if x_t.shape[-1] != wx.shape[0] or h_prev.shape[-1] != wh.shape[0]:
        raise ShapeError(
            f"lstm_cell_step: inputs {x_t.shape}/{h_prev.shape} vs weights {wx.shape}/{wh.shape}"
        )
    if h_prev.shape != c_prev.shape:
        raise ShapeError(f"lstm_cell_step: h {h_prev.shape} vs c {c_prev.shape}")
    h, c, cache = _cell_forward(x_t.data, h_prev.data, c_prev.data, wx.data, wh.data, b.data)
    h_out, c_out = _wrap(h), _wrap(c)
    check_finite(h_out.data, "lstm_cell_step")

    def bwd(dh, dc):
        dx_t, dh_prev, dc_prev, dwx, dwh, db = _cell_backward(
            dh, dc, cache, x_t.data, h_prev.data, wx.data, wh.data
        )
        accumulate(x_t, dx_t)
        accumulate(h_prev, dh_prev)
        accumulate(c_prev, dc_prev)
        accumulate(wx, dwx)
        accumulate(wh, dwh)
        accumulate(b, db)

    record((x_t, h_prev, c_prev, wx, wh, b), (h_out, c_out), bwd)
    return h_out, c_out


def _reverse_index(lengths, seq_len):
    """Per-row index that flips each sequence inside its valid window."""
    t = np.arange(seq_len)[None, :]
    return np.where(t < lengths[:, None], lengths[:, None] - 1 - t, t)


def lstm_scan(x, lengths, wx, wh, b, reverse=False):
    """Scan an LSTM over time as one fused tape op.

    ``x [B,T,d_in]`` with per-sample valid ``lengths``; initial state zero.
    Output ``[B,T,h]`` is zero at positions >= length. ``reverse=True``
    scans each sequence back-to-front within its valid window.
    """
    xd = x.data
    batch, seq_len, _ = xd.shape
    h_dim = wh.shape[0]
    valid = (np.arange(seq_len)[None, :] < lengths[:, None]).astype(xd.dtype)
    rows = np.arange(batch)[:, None]
    if reverse:
        idx = _reverse_index(lengths, seq_len)
        xs = xd[rows, idx]
    else:
        idx = None
        xs = xd

    wxd, whd, bd = wx.data, wh.data, b.data
    h = np.zeros((batch, h_dim), dtype=xd.dtype)
    c = np.zeros_like(h)
    hs = np.empty((batch, seq_len, h_dim), dtype=xd.dtype)
    caches = []
    for t in range(seq_len):
        h, c, cache = _cell_forward(xs[:, t], h, c, wxd, whd, bd)
        hs[:, t] = h
        caches.append(cache)

    out_d = hs * valid[:, :, None]
    if reverse:
        out_d = out_d[rows, idx]
    out = _wrap(out_d)
    check_finite(out.data, "lstm_scan")

    def bwd(g):
        g_valid = g * valid[:, :, None]
        d_hs = g_valid[rows, idx] if reverse else g_valid
        dwx = np.zeros_like(wxd)
        dwh = np.zeros_like(whd)
        db = np.zeros_like(bd)
        dxs = np.empty_like(xs)
        dh = np.zeros((batch, h_dim), dtype=xd.dtype)
        dc = np.zeros_like(dh)
        zero_h = np.zeros((batch, h_dim), dtype=xd.dtype)
        for t in reversed(range(seq_len)):
            h_prev = hs[:, t - 1] if t > 0 else zero_h
            dx_t, dh, dc, dwx_t, dwh_t, db_t = _cell_backward(
                d_hs[:, t] + dh, dc, caches[t], xs[:, t], h_prev, wxd, whd
            )
            dxs[:, t] = dx_t
            dwx += dwx_t
            dwh += dwh_t
            db += db_t
        # the per-row flip is an involution inside the valid window, and
        # gradients outside it are exactly zero
        accumulate(x, dxs[rows, idx] if reverse else dxs)
        accumulate(wx, dwx)
        accumulate(wh, dwh)
        accumulate(b, db)

    record((x, wx, wh, b), (out,), bwd)
    return out


def bi_lstm_forward(x, lengths, params, prefix):
    """Bidirectional LSTM over ``x [B,T,d]``: concat of a forward and a
    backward scan, each of width d/2. Positions past a sample's length are
    zero vectors."""
    lengths = np.asarray(lengths)
    if lengths.min() < 1:
        raise ValueError("bi_lstm_forward: every sample needs length >= 1")
    if lengths.max() > x.shape[1]:
        raise ShapeError(
            f"bi_lstm_forward: length {int(lengths.max())} exceeds padded width {x.shape[1]}"
        )
    fwd = lstm_scan(
        x, lengths, params[f"{prefix}.fwd.wx"], params[f"{prefix}.fwd.wh"],
        params[f"{prefix}.fwd.b"], reverse=False,
    )
    bwd = lstm_scan(
        x, lengths, params[f"{prefix}.bwd.wx"], params[f"{prefix}.bwd.wh"],
        params[f"{prefix}.bwd.b"], reverse=True,
    )
    return concat([fwd, bwd], axis=-1)
