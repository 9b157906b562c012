"""Float-precision model of the supported layer set (numpy arrays).

Semantics mirror the integer engine minus quantization: single-channel 1-D
convs over the flat sequence, filter-major flatten, per-filter max pooling,
ReLU on hidden layers, raw scores from the output layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ExportError(ValueError):
    """Unsupported input to the exporter."""


@dataclass
class FloatConv:
    filters: int
    kernel_width: int
    stride: int
    weights: np.ndarray      # (filters, kernel_width)
    biases: np.ndarray       # (filters,)

    kind = "conv1d"

    def out_len(self, in_len: int) -> int:
        return (in_len - self.kernel_width) // self.stride + 1


@dataclass
class FloatPool:
    window: int

    kind = "maxpool1d"


@dataclass
class FloatDense:
    weights: np.ndarray      # (out_width, in_width)
    biases: np.ndarray       # (out_width,)

    kind = "dense"


@dataclass
class FloatModel:
    layers: list
    input_width: int
    class_count: int

    def forward(self, x: np.ndarray, collect: bool = False):
        """Evaluate one input; optionally return every layer's output."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_width,):
            raise ExportError(f"expected input of width {self.input_width}")
        outs = []
        for i, layer in enumerate(self.layers):
            last = i == len(self.layers) - 1
            if isinstance(layer, FloatConv):
                out_len = layer.out_len(len(x))
                starts = np.arange(out_len) * layer.stride
                windows = x[starts[:, None] + np.arange(layer.kernel_width)]
                acc = windows @ layer.weights.T + layer.biases
                x = np.maximum(acc.T, 0.0).reshape(-1)   # filter-major
            elif isinstance(layer, FloatPool):
                x = x.reshape(-1, layer.window).max(axis=1)
            elif isinstance(layer, FloatDense):
                acc = layer.weights @ x + layer.biases
                x = acc if last else np.maximum(acc, 0.0)
            else:
                raise ExportError(f"unsupported layer {type(layer).__name__}")
            outs.append(x)
        return outs if collect else x

    def argmax(self, x: np.ndarray) -> int:
        scores = self.forward(x)
        return int(np.argmax(scores))


def save_npz(model: FloatModel, path: str):
    arrays = {"input_width": np.array(model.input_width),
              "class_count": np.array(model.class_count)}
    kinds = []
    for i, layer in enumerate(model.layers):
        kinds.append(layer.kind)
        if isinstance(layer, FloatConv):
            arrays[f"l{i}_weights"] = layer.weights
            arrays[f"l{i}_biases"] = layer.biases
            arrays[f"l{i}_stride"] = np.array(layer.stride)
        elif isinstance(layer, FloatPool):
            arrays[f"l{i}_window"] = np.array(layer.window)
        else:
            arrays[f"l{i}_weights"] = layer.weights
            arrays[f"l{i}_biases"] = layer.biases
    arrays["kinds"] = np.array(kinds)
    np.savez(path, **arrays)


def load_npz(path: str) -> FloatModel:
    data = np.load(path, allow_pickle=False)
    layers = []
    for i, kind in enumerate(data["kinds"]):
        kind = str(kind)
        if kind == "conv1d":
            w = data[f"l{i}_weights"]
            layers.append(FloatConv(filters=w.shape[0],
                                    kernel_width=w.shape[1],
                                    stride=int(data[f"l{i}_stride"]),
                                    weights=w, biases=data[f"l{i}_biases"]))
        elif kind == "maxpool1d":
            layers.append(FloatPool(window=int(data[f"l{i}_window"])))
        elif kind == "dense":
            layers.append(FloatDense(weights=data[f"l{i}_weights"],
                                     biases=data[f"l{i}_biases"]))
        else:
            raise ExportError(f"unknown layer kind {kind!r} in {path}")
    return FloatModel(layers=layers, input_width=int(data["input_width"]),
                      class_count=int(data["class_count"]))
