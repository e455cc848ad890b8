"""Parameter construction, initialization, and counting.

All weights draw from Normal(0, 0.02^2); biases start at zero except the
LSTM forget-gate slice, which starts at +1. Initialization consumes one
Philox stream keyed (seed, INIT), drawing tensors in their fixed name
order, so a (config, seed) pair always produces identical parameters.
"""

import numpy as np

from ibert import rng as rng_mod
from ibert.model.config import ModelConfig, Variant
from ibert.numerics.tensor import Tensor

INIT_STD = 0.02


def _lstm_shapes(d_in, d_hidden):
    return {"wx": (d_in, 4 * d_hidden), "wh": (d_hidden, 4 * d_hidden), "b": (4 * d_hidden,)}


def param_shapes(config: ModelConfig):
    """Ordered {name: shape} map for a variant. Shapes derive from the
    config alone."""
    d = config.d_model
    half = d // 2
    shapes = {"embed.tok": (config.vocab_size, d)}
    if config.variant is Variant.BERT_ABS_PE:
        shapes["embed.pos"] = (config.max_positions, d)
    if config.variant.has_bottom_lstm:
        for direction in ("fwd", "bwd"):
            for key, shape in _lstm_shapes(d, half).items():
                shapes[f"bottom.{direction}.{key}"] = shape
    for i in range(config.n_layers):
        if config.variant.has_attention:
            for key in ("wq", "wk", "wv", "wo"):
                shapes[f"layer{i}.attn.{key}"] = (d, d)
            for key in ("bq", "bk", "bv", "bo"):
                shapes[f"layer{i}.attn.{key}"] = (d,)
        shapes[f"layer{i}.ln1.gain"] = (d,)
        shapes[f"layer{i}.ln1.bias"] = (d,)
        if config.variant.has_feed_forward:
            shapes[f"layer{i}.ff.w1"] = (d, config.d_ff)
            shapes[f"layer{i}.ff.b1"] = (config.d_ff,)
            shapes[f"layer{i}.ff.w2"] = (config.d_ff, d)
            shapes[f"layer{i}.ff.b2"] = (d,)
        elif config.variant.has_layer_lstm:
            for direction in ("fwd", "bwd"):
                for key, shape in _lstm_shapes(d, half).items():
                    shapes[f"layer{i}.rnn.{direction}.{key}"] = shape
        if config.variant.has_attention or config.variant is Variant.IBERT2:
            # second sublayer present -> second layer norm
            shapes[f"layer{i}.ln2.gain"] = (d,)
            shapes[f"layer{i}.ln2.bias"] = (d,)
    shapes["head.w"] = (d, config.vocab_size)
    shapes["head.b"] = (config.vocab_size,)
    return shapes


def _init_array(name, shape, gen, dtype):
    if name.endswith(".b") and (".fwd." in name or ".bwd." in name):
        # packed LSTM bias i|f|g|o: forget slice at +1
        arr = np.zeros(shape, dtype=dtype)
        h = shape[0] // 4
        arr[h : 2 * h] = 1.0
        return arr
    if name.endswith(".gain"):
        return np.ones(shape, dtype=dtype)
    last = name.rsplit(".", 1)[-1]
    if last.startswith("b") or last == "bias":
        return np.zeros(shape, dtype=dtype)
    return gen.normal(0.0, INIT_STD, size=shape).astype(dtype)


def init_params(config: ModelConfig, seed, dtype=np.float32):
    """Build the ordered parameter dict for ``config``."""
    gen = rng_mod.stream(seed, rng_mod.INIT)
    params = {}
    for name, shape in param_shapes(config).items():
        params[name] = Tensor(_init_array(name, shape, gen, dtype), requires_grad=True)
    return params


def parameter_count(config: ModelConfig):
    """Closed-form parameter count, independent of any built tensors."""
    d = config.d_model
    half = d // 2
    lstm = 2 * (d * 4 * half + half * 4 * half + 4 * half)  # both directions
    total = config.vocab_size * d
    if config.variant is Variant.BERT_ABS_PE:
        total += config.max_positions * d
    if config.variant.has_bottom_lstm:
        total += lstm
    per_layer = 0
    if config.variant.has_attention:
        per_layer += 4 * (d * d + d)
    per_layer += 2 * d  # ln1
    if config.variant.has_feed_forward:
        per_layer += d * config.d_ff + config.d_ff + config.d_ff * d + d
    elif config.variant.has_layer_lstm:
        per_layer += lstm
    if config.variant.has_attention or config.variant is Variant.IBERT2:
        per_layer += 2 * d  # ln2
    total += config.n_layers * per_layer
    total += d * config.vocab_size + config.vocab_size
    return total


def zero_grads(params):
    for p in params.values():
        p.grad = None
