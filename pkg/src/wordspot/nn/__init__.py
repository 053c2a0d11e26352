"""Minimal deterministic tensor engine: kernels, layers, networks."""

from wordspot.nn.kernels import (
    BACKEND,
    HAVE_EXTENSION,
    available_backends,
    conv3x3_backward,
    conv3x3_forward,
    get_backend,
    maxpool2x2_backward,
    maxpool2x2_forward,
)
from wordspot.nn.layers import (
    SPP,
    TPP,
    Conv3x3,
    Dropout,
    FullyConnected,
    Layer,
    MaxPool2x2,
    Normalize,
    Parameter,
    ReLU,
    Sigmoid,
    Softmax,
    he_normal,
    sigmoid,
    softmax,
)
from wordspot.nn.network import (
    PRESETS,
    LayerSpec,
    Network,
    NetworkSpec,
    build_network,
    load_network,
    network_backward,
    network_forward,
    phocnet_full,
    phocnet_mini,
    read_checkpoint,
    save_network,
    write_checkpoint,
)

__all__ = [
    "BACKEND", "HAVE_EXTENSION", "available_backends", "get_backend",
    "conv3x3_forward", "conv3x3_backward",
    "maxpool2x2_forward", "maxpool2x2_backward",
    "Layer", "Parameter", "he_normal", "sigmoid", "softmax",
    "Conv3x3", "ReLU", "MaxPool2x2", "SPP", "TPP",
    "FullyConnected", "Dropout", "Sigmoid", "Softmax", "Normalize",
    "LayerSpec", "NetworkSpec", "Network", "build_network",
    "network_forward", "network_backward",
    "phocnet_mini", "phocnet_full", "PRESETS",
    "write_checkpoint", "read_checkpoint", "save_network", "load_network",
]
