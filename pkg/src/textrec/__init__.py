"""Scene-text recognition on an attention-equipped convolutional LSTM.

A self-contained float64 stack: tensor ops with reverse-mode differentiation,
the three recurrent cells, the encoder/dual-decoder network, the training
objective, a synthetic word-image generator, and CLI tooling, plus an
sklearn-style estimator front end.
"""

from .cells import (
    AttnConvLstmParams,
    CellState,
    ConvLstmParams,
    FcLstmParams,
    StepTrace,
    attend,
    attn_cell_step,
    conv_lstm_step,
    fc_lstm_step,
    unroll,
)
from .config import Config
from .data import CharsetCodec, Sample, load_dataset, make_dataset, render_sample
from .estimator import TextRecognizer
from .network import ForwardResult, ModelParams, forward
from .optim import Adam
from .tensor import GradTape, ShapeError, Tensor, backward
from .train import evaluate, run_training

__all__ = [
    "Adam",
    "AttnConvLstmParams",
    "CellState",
    "CharsetCodec",
    "Config",
    "ConvLstmParams",
    "FcLstmParams",
    "ForwardResult",
    "GradTape",
    "ModelParams",
    "Sample",
    "ShapeError",
    "StepTrace",
    "Tensor",
    "TextRecognizer",
    "attend",
    "attn_cell_step",
    "backward",
    "conv_lstm_step",
    "evaluate",
    "fc_lstm_step",
    "forward",
    "load_dataset",
    "make_dataset",
    "render_sample",
    "run_training",
    "unroll",
]

__version__ = "0.1.0"
