"""Model construction by family name and parameter accounting."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import fields

from .mar import MarModel
from .mlp import MlpConfig, MlpPredictor
from .recurrent import LstmConfig, LstmPredictor
from .seq2seq import Seq2SeqAttnR, Seq2SeqConfig
from .transformer import TransformerConfig, TransformerParallel, TransformerPredictor

# Published totals for the default (l=16, delta=4) configuration.
PUBLISHED_PARAM_COUNTS = {
    "lstm": 264_448,
    "seq2seq-attn-r": 370_832,
    "transformer-rpe": 178_752,
    "transformer": 178_752,
    "transformer-parallel": 178_752,
}

FAMILIES = (
    "transformer-rpe",
    "transformer",
    "transformer-parallel",
    "seq2seq-attn-r",
    "seq2seq-attn",
    "lstm",
    "mlp",
    "mar",
)

_CONFIGS = {
    "transformer-rpe": (TransformerConfig, {"encoder_pe": "reversed"}),
    "transformer": (TransformerConfig, {"encoder_pe": "standard"}),
    "transformer-parallel": (TransformerConfig, {"encoder_pe": "standard"}),
    "seq2seq-attn-r": (Seq2SeqConfig, {"attention_order": "reversed"}),
    "seq2seq-attn": (Seq2SeqConfig, {"attention_order": "forward"}),
    "lstm": (LstmConfig, {}),
    "mlp": (MlpConfig, {}),
}


def make_config(family: str, **overrides):
    if family not in _CONFIGS:
        raise KeyError(f"unknown trainable family {family!r}; choose from {FAMILIES}")
    cls, fixed = _CONFIGS[family]
    names = {f.name for f in fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise KeyError(f"{family}: unknown config keys {sorted(unknown)}")
    return cls(**{**overrides, **fixed})


def build_model(family: str, seed: int = 0, **overrides):
    """Fresh, randomly initialised model. ``mar`` has no untrained form."""
    cfg = make_config(family, **overrides)
    if family == "transformer-parallel":
        return TransformerParallel(cfg, seed)
    if family.startswith("transformer"):
        return TransformerPredictor(cfg, seed)
    if family.startswith("seq2seq"):
        return Seq2SeqAttnR(cfg, seed)
    if family == "lstm":
        return LstmPredictor(cfg, seed)
    return MlpPredictor(cfg, seed)


def tiny_overrides(family: str) -> dict:
    """Small configurations used for gradient checks and fast tests."""
    if family.startswith("transformer"):
        return dict(input_dim=4, d_model=8, heads=2, d_attn=4, d_mid=4, mlp_hidden=8,
                    enc_layers=1, dec_layers=1, parallel_prefix=2)
    if family.startswith("seq2seq"):
        return dict(input_dim=4, hidden_dim=6, layers=2, max_len=6)
    if family == "lstm":
        return dict(input_dim=4, hidden_dim=6, layers=2, delta=2)
    if family == "mlp":
        return dict(input_dim=4, length=4, delta=2, hidden=8)
    raise KeyError(family)


def count_parameters(model) -> int:
    return model.num_parameters()


def parameter_audit(model, depth: int = 2) -> "OrderedDict[str, int]":
    """Parameter totals per module path, truncated to ``depth`` components."""
    if isinstance(model, MarModel):
        return OrderedDict((k, int(v.size)) for k, v in model.named_arrays().items())
    audit: OrderedDict[str, int] = OrderedDict()
    for name, p in model.named_parameters():
        parts = name.split(".")[:-1] or [name]
        cut = depth + 1 if len(parts) > 1 and parts[1] == "layers" else depth
        block = ".".join(parts[:cut])
        audit[block] = audit.get(block, 0) + int(p.data.size)
    return audit
