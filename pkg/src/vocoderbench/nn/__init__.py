from .layers import (KINDS, BiLSTM, Conv1d, DilatedCausalBlock, FFTanh, GaussianHead, Layer,
                     LayerSpec, Linear, LSTM, Param, Sequential, ShapeError, SoftmaxHead,
                     build_layer, cross_entropy, gaussian_nll, log_softmax, sigmoid)
from .model import Model, load_checkpoint, save_checkpoint, snapshot
from .optim import Optimizer, OptimizerConfig, clip_gradients, global_norm

__all__ = [
    "KINDS", "BiLSTM", "Conv1d", "DilatedCausalBlock", "FFTanh", "GaussianHead", "Layer",
    "LayerSpec", "Linear", "LSTM", "Param", "Sequential", "ShapeError", "SoftmaxHead",
    "build_layer", "cross_entropy", "gaussian_nll", "log_softmax", "sigmoid", "Model",
    "load_checkpoint", "save_checkpoint", "snapshot", "Optimizer", "OptimizerConfig",
    "clip_gradients", "global_norm",
]
