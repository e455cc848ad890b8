"""Model hyperparameters and architecture variants."""

import enum
from dataclasses import dataclass


class Variant(str, enum.Enum):
    """Which encoder wiring to build.

    IBERT        embed -> bottom bi-LSTM -> attention+FF layers
    IBERT_PE     IBERT with sinusoidal position signals added before the bi-LSTM
    IBERT2       IBERT with every feed-forward sublayer replaced by a bi-LSTM
    BERT_ABS_PE  embed + learned absolute position table, no recurrence
    RNN_ENCODER  stack of bi-LSTM layers, no attention
    """

    IBERT = "ibert"
    IBERT_PE = "ibert-pe"
    IBERT2 = "ibert2"
    BERT_ABS_PE = "bert-abs-pe"
    RNN_ENCODER = "rnn-encoder"

    @property
    def has_bottom_lstm(self):
        return self in (Variant.IBERT, Variant.IBERT_PE, Variant.IBERT2)

    @property
    def has_attention(self):
        return self is not Variant.RNN_ENCODER

    @property
    def has_feed_forward(self):
        return self in (Variant.IBERT, Variant.IBERT_PE, Variant.BERT_ABS_PE)

    @property
    def has_layer_lstm(self):
        return self in (Variant.IBERT2, Variant.RNN_ENCODER)


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    n_heads: int
    d_model: int
    d_ff: int
    vocab_size: int
    variant: Variant
    max_positions: int = 0   # BERT_ABS_PE only; sized to the longest dataset sequence
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.n_layers < 1:
            raise ValueError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.d_model % 2 != 0:
            raise ValueError(f"d_model must be even for the two scan directions, got {self.d_model}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0,1), got {self.dropout_rate}")
        if self.variant is Variant.BERT_ABS_PE and self.max_positions < 1:
            raise ValueError("BERT_ABS_PE needs max_positions >= 1")

    @property
    def d_head(self):
        return self.d_model // self.n_heads

    def to_dict(self):
        return {
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_model": self.d_model,
            "d_ff": self.d_ff,
            "vocab_size": self.vocab_size,
            "variant": self.variant.value,
            "max_positions": self.max_positions,
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["variant"] = Variant(d["variant"])
        return cls(**d)
