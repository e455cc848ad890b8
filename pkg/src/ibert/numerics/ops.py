"""Differentiable operations on tensors.

Each op computes its forward result eagerly, verifies the result is finite,
and registers a backward rule on the active tape. Binary ops accept plain
floats or ndarrays for either operand; those are treated as constants and
receive no gradient.

Broadcasting is deliberately narrow: operands must have equal shapes, or
one side must be a scalar, or the smaller operand must match the trailing
dimensions of the larger one exactly (a pure leading-batch broadcast).
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ibert.errors import NumericError, ShapeError
from ibert.numerics.tensor import Tensor, _wrap, accumulate, check_finite, record

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


def _data(x):
    return x.data if isinstance(x, Tensor) else x


def _const(x, like_dtype):
    arr = np.asarray(x, dtype=like_dtype)
    return arr


def _check_broadcast(sa, sb, op):
    """Allow equal shapes, scalars, or a pure leading-dimension broadcast."""
    if sa == sb or sa == () or sb == ():
        return
    small, big = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    if big[len(big) - len(small):] == small:
        return
    # leading dims of size 1 on the longer-rank side (batched matmul style)
    if len(sa) == len(sb) and all(
        a == b or a == 1 or b == 1 for a, b in zip(sa[:-2], sb[:-2])
    ) and sa[-2:] == sb[-2:]:
        return
    raise ShapeError(f"{op}: shapes {sa} and {sb} do not broadcast (leading dims only)")


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of a leading broadcast)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b):
    ad, bd = _data(a), _data(b)
    bd = _const(bd, ad.dtype) if not isinstance(b, Tensor) else bd
    _check_broadcast(np.shape(ad), np.shape(bd), "add")
    out = _wrap(ad + bd)
    check_finite(out.data, "add")

    def bwd(g):
        accumulate(a, _unbroadcast(g, ad.shape))
        if isinstance(b, Tensor):
            accumulate(b, _unbroadcast(g, bd.shape))

    record((a, b), (out,), bwd)
    return out


def sub(a, b):
    ad, bd = _data(a), _data(b)
    bd = _const(bd, ad.dtype) if not isinstance(b, Tensor) else bd
    _check_broadcast(np.shape(ad), np.shape(bd), "sub")
    out = _wrap(ad - bd)
    check_finite(out.data, "sub")

    def bwd(g):
        accumulate(a, _unbroadcast(g, ad.shape))
        if isinstance(b, Tensor):
            accumulate(b, _unbroadcast(-g, bd.shape))

    record((a, b), (out,), bwd)
    return out


def mul(a, b):
    ad, bd = _data(a), _data(b)
    bd = _const(bd, ad.dtype) if not isinstance(b, Tensor) else bd
    _check_broadcast(np.shape(ad), np.shape(bd), "mul")
    out = _wrap(ad * bd)
    check_finite(out.data, "mul")

    def bwd(g):
        accumulate(a, _unbroadcast(g * bd, ad.shape))
        if isinstance(b, Tensor):
            accumulate(b, _unbroadcast(g * ad, bd.shape))

    record((a, b), (out,), bwd)
    return out


def matmul(a, b):
    ad, bd = _data(a), _data(b)
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {ad.shape} and {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {ad.shape} x {bd.shape}")
    if ad.ndim == bd.ndim and not all(
        x == y or x == 1 or y == 1 for x, y in zip(ad.shape[:-2], bd.shape[:-2])
    ):
        raise ShapeError(f"matmul batch dimensions disagree: {ad.shape} x {bd.shape}")
    out = _wrap(ad @ bd)
    check_finite(out.data, "matmul")

    def bwd(g):
        if isinstance(a, Tensor) and a.requires_grad:
            ga = g @ np.swapaxes(bd, -1, -2)
            accumulate(a, _unbroadcast(ga, ad.shape))
        if isinstance(b, Tensor) and b.requires_grad:
            gb = np.swapaxes(ad, -1, -2) @ g
            accumulate(b, _unbroadcast(gb, bd.shape))

    record((a, b), (out,), bwd)
    return out


def linear(x, w, b=None):
    """x[..., k] @ w[k, n] (+ b[n]). One fused tape entry."""
    xd, wd = x.data, w.data
    if xd.shape[-1] != wd.shape[0]:
        raise ShapeError(f"linear: input width {xd.shape} vs weight {wd.shape}")
    out_d = xd @ wd
    if b is not None:
        out_d += b.data
    out = _wrap(out_d)
    check_finite(out.data, "linear")

    def bwd(g):
        g2 = g.reshape(-1, g.shape[-1])
        if x.requires_grad:
            accumulate(x, (g @ wd.T).reshape(xd.shape))
        if w.requires_grad:
            accumulate(w, xd.reshape(-1, xd.shape[-1]).T @ g2)
        if b is not None and b.requires_grad:
            accumulate(b, g2.sum(axis=0))

    record((x, w) if b is None else (x, w, b), (out,), bwd)
    return out


def _softmax_raw(x, axis):
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x, axis=-1):
    xd = x.data
    if not -xd.ndim <= axis < xd.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {xd.shape}")
    y = _softmax_raw(xd, axis)
    out = _wrap(y)
    check_finite(out.data, "softmax")

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        accumulate(x, y * (g - dot))

    record((x,), (out,), bwd)
    return out


def masked_softmax(x, mask, axis=-1):
    """Softmax over positions where ``mask`` is True; False positions get
    exactly zero weight. A slice with no valid position is an error."""
    xd = x.data
    m = np.broadcast_to(np.asarray(mask, dtype=bool), xd.shape)
    neg = np.where(m, xd, -np.inf)
    mx = neg.max(axis=axis, keepdims=True)
    if not np.isfinite(mx).all():
        raise NumericError("masked_softmax: a slice has no valid position")
    e = np.exp(neg - mx)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _wrap(y)
    check_finite(out.data, "masked_softmax")

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        accumulate(x, y * (g - dot))

    record((x,), (out,), bwd)
    return out


def layer_norm(x, gain, bias, eps=1e-5):
    """Standardize the last dimension to mean 0 / variance 1, then scale+shift."""
    xd = x.data
    d = xd.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain {gain.shape} / bias {bias.shape} must be ({d},)"
        )
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = _wrap(xhat * gain.data + bias.data)
    check_finite(out.data, "layer_norm")

    def bwd(g):
        dxhat = g * gain.data
        if x.requires_grad:
            term = dxhat - dxhat.mean(axis=-1, keepdims=True)
            term -= xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            accumulate(x, inv * term)
        if gain.requires_grad:
            accumulate(gain, (g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            accumulate(bias, g.reshape(-1, d).sum(axis=0))

    record((x, gain, bias), (out,), bwd)
    return out


def _sigmoid_raw(x):
    # stable in both tails: exp only sees non-positive arguments
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(x):
    y = _sigmoid_raw(x.data)
    out = _wrap(y)
    check_finite(out.data, "sigmoid")
    record((x,), (out,), lambda g: accumulate(x, g * y * (1.0 - y)))
    return out


def tanh(x):
    y = np.tanh(x.data)
    out = _wrap(y)
    check_finite(out.data, "tanh")
    record((x,), (out,), lambda g: accumulate(x, g * (1.0 - y * y)))
    return out


def relu(x):
    y = np.maximum(x.data, 0.0)
    out = _wrap(y)
    check_finite(out.data, "relu")
    record((x,), (out,), lambda g: accumulate(x, g * (x.data > 0)))
    return out


def gelu(x):
    """Exact erf form: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    xd = x.data
    phi = 0.5 * (1.0 + special.erf(xd * _INV_SQRT2))
    out = _wrap(xd * phi)
    check_finite(out.data, "gelu")

    def bwd(g):
        pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT_2PI
        accumulate(x, g * (phi + xd * pdf))

    record((x,), (out,), bwd)
    return out


_POINTWISE = {"gelu": gelu, "sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def pointwise(x, fn):
    if fn not in _POINTWISE:
        raise ValueError(f"unknown pointwise fn {fn!r}; choose from {sorted(_POINTWISE)}")
    return _POINTWISE[fn](x)


def masked_cross_entropy(logits, targets, mask):
    """Mean of -log softmax(logits)[target] over masked positions, in nats.

    Unmasked positions contribute exactly zero to the value and gradient.
    """
    ld = logits.data
    if ld.ndim != 3:
        raise ShapeError(f"masked_cross_entropy expects [B,T,V] logits, got {ld.shape}")
    tgt = np.asarray(targets)
    msk = np.asarray(mask, dtype=bool)
    if tgt.shape != ld.shape[:2] or msk.shape != ld.shape[:2]:
        raise ShapeError(
            f"targets {tgt.shape} / mask {msk.shape} must match logits batch dims {ld.shape[:2]}"
        )
    n_masked = int(msk.sum())
    if n_masked == 0:
        raise ValueError("masked_cross_entropy: mask selects no positions")
    vocab = ld.shape[-1]
    masked_targets = tgt[msk]
    if masked_targets.size and (masked_targets.min() < 0 or masked_targets.max() >= vocab):
        raise ValueError(
            f"masked_cross_entropy: target id out of range [0,{vocab}) at a masked position"
        )

    mx = ld.max(axis=-1, keepdims=True)
    lse = mx + np.log(np.exp(ld - mx).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(ld, np.clip(tgt, 0, vocab - 1)[..., None], axis=-1)
    nll = (lse[..., 0] - picked[..., 0])
    loss_val = float((nll * msk).sum() / n_masked)
    out = _wrap(np.array(loss_val, dtype=ld.dtype))
    check_finite(out.data, "masked_cross_entropy")

    def bwd(g):
        if not logits.requires_grad:
            return
        soft = np.exp(ld - lse)
        b, t = np.nonzero(msk)
        d = soft * msk[..., None]
        d[b, t, tgt[msk]] -= 1.0
        accumulate(logits, d * (float(g) / n_masked))

    record((logits,), (out,), bwd)
    return out


def embedding(table, ids):
    """Row lookup ``table[ids]`` with scatter-add backward."""
    idx = np.asarray(ids)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ValueError(
            f"embedding: id out of range [0,{table.shape[0]}) in lookup"
        )
    out = _wrap(table.data[idx])
    check_finite(out.data, "embedding")

    def bwd(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, idx, g)
        accumulate(table, dt)

    record((table,), (out,), bwd)
    return out


def concat(tensors, axis=-1):
    datas = [t.data for t in tensors]
    out = _wrap(np.concatenate(datas, axis=axis))
    check_finite(out.data, "concat")
    sizes = [d.shape[axis] for d in datas]

    def bwd(g):
        offset = 0
        for t, s in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis if axis >= 0 else g.ndim + axis] = slice(offset, offset + s)
            accumulate(t, g[tuple(sl)])
            offset += s

    record(tuple(tensors), (out,), bwd)
    return out


def stack(tensors, axis=0):
    out = _wrap(np.stack([t.data for t in tensors], axis=axis))
    check_finite(out.data, "stack")

    def bwd(g):
        for i, t in enumerate(tensors):
            accumulate(t, np.take(g, i, axis=axis))

    record(tuple(tensors), (out,), bwd)
    return out


def take(x, index, axis):
    """Select one index along ``axis`` (dimension is dropped)."""
    out = _wrap(np.take(x.data, index, axis=axis))
    check_finite(out.data, "take")

    def bwd(g):
        dx = np.zeros_like(x.data)
        sl = [slice(None)] * x.data.ndim
        sl[axis] = index
        dx[tuple(sl)] = g
        accumulate(x, dx)

    record((x,), (out,), bwd)
    return out


def reshape(x, shape):
    out = _wrap(x.data.reshape(shape))
    record((x,), (out,), lambda g: accumulate(x, g.reshape(x.data.shape)))
    return out


def transpose(x, axes):
    out = _wrap(np.transpose(x.data, axes))
    inv = np.argsort(axes)
    record((x,), (out,), lambda g: accumulate(x, np.transpose(g, inv)))
    return out


def sum_all(x):
    out = _wrap(np.array(x.data.sum(), dtype=x.dtype))
    check_finite(out.data, "sum_all")
    record((x,), (out,), lambda g: accumulate(x, np.full_like(x.data, float(g))))
    return out


def mean_all(x):
    n = x.size
    out = _wrap(np.array(x.data.mean(), dtype=x.dtype))
    check_finite(out.data, "mean_all")
    record((x,), (out,), lambda g: accumulate(x, np.full_like(x.data, float(g) / n)))
    return out


def dropout(x, rate, rng):
    """Inverted dropout; identity when rate == 0."""
    if rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0,1), got {rate}")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    scale_ = 1.0 / (1.0 - rate)
    out = _wrap(x.data * keep * scale_)
    check_finite(out.data, "dropout")
    record((x,), (out,), lambda g: accumulate(x, g * keep * scale_))
    return out
