"""Variant-dispatched encoder forward pass producing per-position logits."""

import numpy as np

from ibert.errors import ShapeError
from ibert.model.attention import multi_head_attention
from ibert.model.config import ModelConfig, Variant
from ibert.model.recurrent import bi_lstm_forward
from ibert.numerics import ops
from ibert.numerics.tensor import Tensor


def sinusoidal_pe(seq_len, d_model, dtype=np.float32):
    """Fixed sin/cos position table [T, d_model]:
    pe[p, 2i] = sin(p / 10000^(2i/d)), pe[p, 2i+1] = cos(same)."""
    if d_model % 2 != 0:
        raise ShapeError(f"sinusoidal_pe needs even d_model, got {d_model}")
    pos = np.arange(seq_len, dtype=np.float64)[:, None]
    i2 = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i2 / d_model)
    pe = np.empty((seq_len, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return Tensor(pe.astype(dtype))


def _maybe_dropout(x, config, train_mode, rng):
    if train_mode and config.dropout_rate > 0.0:
        return ops.dropout(x, config.dropout_rate, rng)
    return x


def _sublayer(x, inner, params, ln_name, config, train_mode, rng):
    """Post-norm residual block: LN(x + dropout(inner))."""
    summed = ops.add(x, _maybe_dropout(inner, config, train_mode, rng))
    return ops.layer_norm(
        summed, params[f"{ln_name}.gain"], params[f"{ln_name}.bias"]
    )


def model_forward(tokens, lengths, config: ModelConfig, params, train_mode=False, rng=None):
    """Run one encoder variant over ``tokens [B,T]`` with valid ``lengths``.

    Returns logits ``[B, T, vocab_size]``. Dropout draws from ``rng`` and is
    applied only when ``train_mode`` is set.
    """
    tokens = np.asarray(tokens)
    lengths = np.asarray(lengths)
    if tokens.ndim != 2:
        raise ShapeError(f"tokens must be [B,T], got {tokens.shape}")
    if tokens.size and tokens.max() >= config.vocab_size:
        raise ValueError(
            f"token id {int(tokens.max())} out of range for vocab {config.vocab_size}"
        )
    if lengths.shape != (tokens.shape[0],):
        raise ShapeError(f"lengths {lengths.shape} must be [B] for tokens {tokens.shape}")
    if train_mode and config.dropout_rate > 0.0 and rng is None:
        raise ValueError("train_mode with dropout needs an rng")
    batch, seq_len = tokens.shape
    variant = config.variant
    dtype = params["embed.tok"].dtype

    x = ops.embedding(params["embed.tok"], tokens)
    if variant is Variant.IBERT_PE:
        x = ops.add(x, sinusoidal_pe(seq_len, config.d_model, dtype))
    elif variant is Variant.BERT_ABS_PE:
        if seq_len > config.max_positions:
            raise ShapeError(
                f"sequence length {seq_len} exceeds the learned position table "
                f"({config.max_positions} positions)"
            )
        x = ops.add(x, ops.embedding(params["embed.pos"], np.arange(seq_len)))
    x = _maybe_dropout(x, config, train_mode, rng)

    if variant.has_bottom_lstm:
        x = bi_lstm_forward(x, lengths, params, "bottom")

    pad_mask = np.arange(seq_len)[None, :] < lengths[:, None]
    for i in range(config.n_layers):
        if variant.has_attention:
            attn = multi_head_attention(x, params, f"layer{i}.attn", config.n_heads, pad_mask)
            x = _sublayer(x, attn, params, f"layer{i}.ln1", config, train_mode, rng)
        if variant.has_feed_forward:
            h = ops.gelu(ops.linear(x, params[f"layer{i}.ff.w1"], params[f"layer{i}.ff.b1"]))
            ff = ops.linear(h, params[f"layer{i}.ff.w2"], params[f"layer{i}.ff.b2"])
            x = _sublayer(x, ff, params, f"layer{i}.ln2", config, train_mode, rng)
        elif variant is Variant.IBERT2:
            rec = bi_lstm_forward(x, lengths, params, f"layer{i}.rnn")
            x = _sublayer(x, rec, params, f"layer{i}.ln2", config, train_mode, rng)
        elif variant is Variant.RNN_ENCODER:
            rec = bi_lstm_forward(x, lengths, params, f"layer{i}.rnn")
            x = _sublayer(x, rec, params, f"layer{i}.ln1", config, train_mode, rng)

    return ops.linear(x, params["head.w"], params["head.b"])
