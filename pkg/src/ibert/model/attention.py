"""Scaled dot-product and multi-head self-attention."""

import math

import numpy as np

from ibert.errors import ShapeError
from ibert.numerics import ops


def scaled_dot_product_attention(q, k, v, pad_mask):
    """softmax(q k^T / sqrt(d_k)) v over [B,H,T,d_k] with padded key
    positions excluded (their attention weight is exactly zero)."""
    if q.shape != k.shape or q.shape != v.shape:
        raise ShapeError(f"attention operands disagree: {q.shape}, {k.shape}, {v.shape}")
    d_k = q.shape[-1]
    scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d_k))
    key_mask = np.asarray(pad_mask, dtype=bool)[:, None, None, :]
    probs = ops.masked_softmax(scores, key_mask, axis=-1)
    return ops.matmul(probs, v)


def _split_heads(x, n_heads):
    batch, seq_len, d_model = x.shape
    x = ops.reshape(x, (batch, seq_len, n_heads, d_model // n_heads))
    return ops.transpose(x, (0, 2, 1, 3))


def _merge_heads(x):
    batch, n_heads, seq_len, d_head = x.shape
    x = ops.transpose(x, (0, 2, 1, 3))
    return ops.reshape(x, (batch, seq_len, n_heads * d_head))


def multi_head_attention(x, params, prefix, n_heads, pad_mask):
    """Project to Q/K/V, attend per head, merge, output-project.

    Residual connection and layer norm belong to the caller (post-norm).
    """
    q = _split_heads(ops.linear(x, params[f"{prefix}.wq"], params[f"{prefix}.bq"]), n_heads)
    k = _split_heads(ops.linear(x, params[f"{prefix}.wk"], params[f"{prefix}.bk"]), n_heads)
    v = _split_heads(ops.linear(x, params[f"{prefix}.wv"], params[f"{prefix}.bv"]), n_heads)
    ctx = _merge_heads(scaled_dot_product_attention(q, k, v, pad_mask))
    return ops.linear(ctx, params[f"{prefix}.wo"], params[f"{prefix}.bo"])
