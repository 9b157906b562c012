"""Torch trainer for the canonical conv32-conv64-dense architecture.

Desk-scale by default: the widths of the architecture are fixed, the input
width is a parameter.  The synthetic task labels an input by a threshold on
its first feature, which a few epochs of Adam learn essentially perfectly.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .floatmodel import ExportError, FloatConv, FloatDense, FloatModel, FloatPool

ARCH = (("conv", 32, 3, 1), ("pool", 2), ("conv", 64, 3, 1), ("pool", 2),
        ("dense", 50), ("dense", 100))


class _CanonicalNet(nn.Module):
    """Single-channel conv stack matching the integer IR's flat-sequence view."""

    def __init__(self, input_width: int, class_count: int):
        super().__init__()
        self.convs = nn.ModuleList()
        self.pools = []
        width = input_width
        for item in ARCH:
            if item[0] == "conv":
                _, filters, kernel, stride = item
                conv = nn.Conv1d(1, filters, kernel, stride=stride)
                self.convs.append(conv)
                self.pools.append(None)
                width = filters * ((width - kernel) // stride + 1)
            elif item[0] == "pool":
                self.pools[-1] = nn.MaxPool1d(item[1])
                filters = self.convs[-1].out_channels
                per = width // filters
                width = filters * (per // item[1])
        self.fc = nn.ModuleList()
        for item in ARCH:
            if item[0] == "dense":
                self.fc.append(nn.Linear(width, item[1]))
                width = item[1]
        self.out = nn.Linear(width, class_count)

    def forward(self, x):
        # x: (batch, width); each conv treats the running vector as one channel
        h = x
        for conv, pool in zip(self.convs, self.pools):
            h = conv(h.unsqueeze(1))
            h = torch.relu(h)
            if pool is not None:
                h = pool(h)
            h = h.flatten(1)   # filter-major, matching the integer IR
        for fc in self.fc:
            h = torch.relu(fc(h))
        return self.out(h)


def _check_geometry(input_width: int):
    width = input_width
    for item in ARCH:
        if item[0] == "conv":
            _, filters, kernel, stride = item
            if width < kernel:
                raise ExportError(f"input width {input_width} too small for "
                                  f"the canonical architecture")
            out_len = (width - kernel) // stride + 1
            width = filters * out_len
        elif item[0] == "pool":
            per = out_len
            if per % item[1]:
                raise ExportError(f"pool window {item[1]} does not divide "
                                  f"conv output length {per}")
            width = filters * (per // item[1])
            out_len = per // item[1]


def synthetic_dataset(rng: np.random.Generator, n: int, width: int):
    """Byte-valued inputs; the label is a threshold on feature 0."""
    x = rng.integers(0, 256, size=(n, width)).astype(np.float32)
    y = (x[:, 0] >= 128).astype(np.int64)
    return x, y


def train_float_model(input_width: int = 8, class_count: int = 2,
                      seed: int = 0, epochs: int = 30,
                      samples: int = 256) -> FloatModel:
    """Train the canonical architecture on the synthetic task."""
    _check_geometry(input_width)
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    x, y = synthetic_dataset(rng, samples, input_width)
    net = _CanonicalNet(input_width, class_count)
    opt = torch.optim.Adam(net.parameters(), lr=1e-3)
    loss_fn = nn.CrossEntropyLoss()
    xt = torch.from_numpy(x / 255.0)
    yt = torch.from_numpy(y)
    for _ in range(epochs):
        opt.zero_grad()
        loss = loss_fn(net(xt), yt)
        loss.backward()
        opt.step()
    # training normalized inputs to [0, 1]; fold that scale into the first
    # layer so the exported model consumes raw byte features directly
    return to_float_model(net, input_width, class_count, input_scale=255.0)


def to_float_model(net: _CanonicalNet, input_width: int, class_count: int,
                   input_scale: float = 1.0) -> FloatModel:
    layers = []
    conv_i = 0
    for item in ARCH:
        if item[0] == "conv":
            conv = net.convs[conv_i]
            layers.append(FloatConv(
                filters=conv.out_channels,
                kernel_width=conv.kernel_size[0],
                stride=conv.stride[0],
                weights=conv.weight.detach().numpy().reshape(
                    conv.out_channels, -1).astype(np.float64),
                biases=conv.bias.detach().numpy().astype(np.float64)))
            if net.pools[conv_i] is not None:
                layers.append(FloatPool(
                    window=net.pools[conv_i].kernel_size))
            conv_i += 1
    for fc in list(net.fc) + [net.out]:
        layers.append(FloatDense(
            weights=fc.weight.detach().numpy().astype(np.float64),
            biases=fc.bias.detach().numpy().astype(np.float64)))
    first = next(l for l in layers if not isinstance(l, FloatPool))
    first.weights = first.weights / input_scale
    return FloatModel(layers=layers, input_width=input_width,
                      class_count=class_count)
