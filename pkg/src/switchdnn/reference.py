"""Golden integer inference engine; the fabric simulation must match it bit-for-bit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    ACT_MAX,
    Conv1D,
    Dense,
    INT32_MAX,
    INT32_MIN,
    MaxPool1D,
    QuantizedModel,
)


class InferenceError(ValueError):
    """Input/layer dimension mismatch."""


@dataclass(frozen=True)
class ClassScores:
    """Raw output-layer accumulators plus the winning class index."""

    scores: tuple
    argmax: int


def _check_int32(arr: np.ndarray):
    # Overflow anywhere is a defect, not a rounding mode.
    assert arr.min(initial=0) >= INT32_MIN and arr.max(initial=0) <= INT32_MAX, \
        "accumulator overflowed 32 bits"


def _relu_requant(acc: np.ndarray, shift: int) -> np.ndarray:
    acc = np.where(acc < 0, 0, acc)
    return np.minimum(acc >> shift, ACT_MAX)


def layer_forward(layer, values, *, output_layer: bool = False) -> tuple:
    """Evaluate one layer on a flat activation sequence.

    Hidden conv/dense layers apply ReLU then requantization; with
    ``output_layer`` a dense layer returns raw 32-bit accumulators instead.
    """
    x = np.asarray(values, dtype=np.int64)
    if isinstance(layer, Conv1D):
        if len(x) < layer.kernel_width:
            raise InferenceError(
                f"input width {len(x)} shorter than kernel {layer.kernel_width}")
        out_len = layer.out_len(len(x))
        starts = np.arange(out_len) * layer.stride
        windows = x[starts[:, None] + np.arange(layer.kernel_width)]
        kernels = np.asarray(layer.weights, dtype=np.int64)
        acc = windows @ kernels.T + np.asarray(layer.biases, dtype=np.int64)
        _check_int32(acc)
        out = _relu_requant(acc.T, layer.requant_shift)  # filter-major
        return tuple(int(v) for v in out.reshape(-1))
    if isinstance(layer, MaxPool1D):
        if len(x) % layer.window != 0:
            raise InferenceError(
                f"pool window {layer.window} does not divide width {len(x)}")
        # Window-aligned chunking equals per-filter pooling because the
        # window divides every filter's segment length.
        out = x.reshape(-1, layer.window).max(axis=1)
        return tuple(int(v) for v in out)
    if isinstance(layer, Dense):
        if len(x) != layer.in_width:
            raise InferenceError(
                f"dense expects width {layer.in_width}, got {len(x)}")
        weights = np.asarray(layer.weights, dtype=np.int64)
        acc = weights @ x + np.asarray(layer.biases, dtype=np.int64)
        _check_int32(acc)
        if output_layer:
            return tuple(int(v) for v in acc)
        out = _relu_requant(acc, layer.requant_shift)
        return tuple(int(v) for v in out)
    raise InferenceError(f"unknown layer type {type(layer).__name__}")


def infer(model: QuantizedModel, values) -> ClassScores:
    """Sequential layer evaluation; the final dense layer yields raw scores."""
    x = tuple(values)
    if len(x) != model.input_width:
        raise InferenceError(
            f"input width {len(x)} does not match model {model.input_width}")
    for i, layer in enumerate(model.layers):
        x = layer_forward(layer, x, output_layer=(i == len(model.layers) - 1))
    return ClassScores(scores=x, argmax=argmax_lowest(x))


def layer_outputs(model: QuantizedModel, values) -> list:
    """Per-layer outputs of infer, in layer order (last entry is raw scores)."""
    x = tuple(values)
    if len(x) != model.input_width:
        raise InferenceError(
            f"input width {len(x)} does not match model {model.input_width}")
    outs = []
    for i, layer in enumerate(model.layers):
        x = layer_forward(layer, x, output_layer=(i == len(model.layers) - 1))
        outs.append(x)
    return outs


def argmax_lowest(scores) -> int:
    """Smallest index attaining the maximum score."""
    best, best_i = None, 0
    for i, s in enumerate(scores):
        if best is None or s > best:
            best, best_i = s, i
    return best_i
