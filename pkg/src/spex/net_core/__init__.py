"""Differentiable numerical primitives: tape autodiff, convolutions,
normalizations, LSTM, and a finite-difference gradient checker."""

from .conv import ConvSpec, conv1d, deconv1d
from .gradcheck import grad_check
from .norm import NORM_EPS, channel_norm, global_layer_norm
from .rnn import blstm, lstm_seq
from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    div,
    exp,
    flip,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    narrow,
    no_grad,
    pad_end,
    prelu,
    relu,
    reshape,
    sigmoid,
    softmax,
    sqrt,
    square,
    sub,
    sum_,
    take_class,
    tanh,
    tile_frames,
)

__all__ = [
    "ConvSpec",
    "NORM_EPS",
    "Tensor",
    "add",
    "as_tensor",
    "blstm",
    "channel_norm",
    "concat",
    "conv1d",
    "deconv1d",
    "div",
    "exp",
    "flip",
    "global_layer_norm",
    "grad_check",
    "log",
    "log_softmax",
    "lstm_seq",
    "matmul",
    "mean",
    "mul",
    "narrow",
    "no_grad",
    "pad_end",
    "prelu",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "sqrt",
    "square",
    "sub",
    "sum_",
    "take_class",
    "tanh",
    "tile_frames",
]
