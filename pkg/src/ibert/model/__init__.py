"""Encoder variants behind a single forward interface."""

from ibert.model.attention import multi_head_attention, scaled_dot_product_attention
from ibert.model.checkpoint import load_checkpoint, save_checkpoint
from ibert.model.config import ModelConfig, Variant
from ibert.model.encoder import model_forward, sinusoidal_pe
from ibert.model.params import init_params, param_shapes, parameter_count, zero_grads
from ibert.model.recurrent import bi_lstm_forward, lstm_cell_step, lstm_scan

__all__ = [
    "ModelConfig",
    "Variant",
    "bi_lstm_forward",
    "init_params",
    "load_checkpoint",
    "lstm_cell_step",
    "lstm_scan",
    "model_forward",
    "multi_head_attention",
    "param_shapes",
    "parameter_count",
    "save_checkpoint",
    "scaled_dot_product_attention",
    "sinusoidal_pe",
    "zero_grads",
]
