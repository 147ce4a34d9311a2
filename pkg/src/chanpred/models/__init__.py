from .base import Predictor, UnsupportedLength
from .mar import MarModel, mar_fit
from .mlp import MlpConfig, MlpPredictor
from .recurrent import GruParams, GruStack, LstmConfig, LstmParams, LstmPredictor, gru_cell, lstm_cell
from .registry import (
    FAMILIES,
    PUBLISHED_PARAM_COUNTS,
    build_model,
    count_parameters,
    make_config,
    parameter_audit,
    tiny_overrides,
)
from .seq2seq import Seq2SeqAttnR, Seq2SeqConfig, pairing, seq2seq_attend
from .transformer import TransformerConfig, TransformerParallel, TransformerPredictor

__all__ = [
    "FAMILIES", "GruParams", "GruStack", "LstmConfig", "LstmParams", "LstmPredictor", "MarModel",
    "MlpConfig", "MlpPredictor", "PUBLISHED_PARAM_COUNTS", "Predictor", "Seq2SeqAttnR", "Seq2SeqConfig",
    "TransformerConfig", "TransformerParallel", "TransformerPredictor", "UnsupportedLength",
    "build_model", "count_parameters", "gru_cell", "lstm_cell", "make_config", "mar_fit",
    "pairing", "parameter_audit", "seq2seq_attend", "tiny_overrides",
]
