"""CSI prediction with attention models.

Subpackages: :mod:`chanpred.nn` (tensors, autodiff, layers, Adam),
:mod:`chanpred.models` (Transformer-RPE and relatives, Seq2Seq-attn-R,
LSTM, MLP, MAR) and the modules :mod:`chanpred.channel` (channel
simulation), :mod:`chanpred.dataset_io`, :mod:`chanpred.train_eval` and
:mod:`chanpred.cli`.
"""
from ._accel import backend_name

__version__ = "0.1.0"

__all__ = ["__version__", "backend_name"]
