"""Post-training quantization: symmetric 8-bit weights, power-of-two rescale.

Only right-shifts are legal on the target, so every activation rescale is a
`requant_shift`; the shift for each hidden layer is the smallest one keeping
the calibration-set saturation rate at or below 1%.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .floatmodel import ExportError, FloatConv, FloatDense, FloatModel, FloatPool

SATURATION_LIMIT = 0.01
ACT_MAX = 255
MAX_SHIFT = 31


@dataclass
class LayerCalibration:
    index: int
    kind: str
    weight_scale: float
    requant_shift: int
    saturation_rate: float
    activation_scale: float


@dataclass
class ExportBundle:
    model_text: str
    calibration: list
    holdout_agreement: float
    trace_text: str = None

    def write(self, model_path, trace_path=None):
        with open(model_path, "w", encoding="utf-8") as fh:
            fh.write(self.model_text)
        if trace_path is not None:
            if self.trace_text is None:
                raise ExportError("bundle has no trace to write")
            with open(trace_path, "w", encoding="utf-8") as fh:
                fh.write(self.trace_text)

    def summary(self) -> str:
        lines = [f"{'layer':>5} {'kind':<10} {'w_scale':>12} {'shift':>5} "
                 f"{'saturation':>10} {'act_scale':>12}"]
        for c in self.calibration:
            lines.append(f"{c.index:>5} {c.kind:<10} {c.weight_scale:>12.6g} "
                         f"{c.requant_shift:>5} {c.saturation_rate:>10.4f} "
                         f"{c.activation_scale:>12.6g}")
        lines.append(f"holdout argmax agreement: {self.holdout_agreement:.3f}")
        return "\n".join(lines)


@dataclass
class _IntLayer:
    kind: str
    weights: np.ndarray = None   # int64
    biases: np.ndarray = None
    shift: int = 0
    stride: int = 1
    kernel_width: int = 0
    window: int = 0


def _quantize_weights(weights: np.ndarray):
    peak = float(np.abs(weights).max()) if weights.size else 0.0
    scale = peak / 127.0 if peak > 0 else 1.0
    ints = np.clip(np.round(weights / scale), -127, 127).astype(np.int64)
    return ints, scale


def _int_layer_forward(layer: _IntLayer, x: np.ndarray, last: bool):
    """x: (batch, width) int64 -> (batch, out_width) pre-activation accs."""
    if layer.kind == "conv1d":
        out_len = (x.shape[1] - layer.kernel_width) // layer.stride + 1
        starts = np.arange(out_len) * layer.stride
        windows = x[:, starts[:, None] + np.arange(layer.kernel_width)]
        acc = np.einsum("bok,fk->bfo", windows, layer.weights) \
            + layer.biases[None, :, None]
        return acc.reshape(x.shape[0], -1)
    if layer.kind == "maxpool1d":
        return x.reshape(x.shape[0], -1, layer.window).max(axis=2)
    acc = x @ layer.weights.T + layer.biases[None, :]
    return acc


def _requant(acc: np.ndarray, shift: int) -> np.ndarray:
    return np.minimum(np.maximum(acc, 0) >> shift, ACT_MAX)


def _pick_shift(acc: np.ndarray) -> tuple:
    """Smallest shift with saturation <= 1% over the calibration set."""
    positive = np.maximum(acc, 0)
    for shift in range(MAX_SHIFT + 1):
        rate = float(np.mean((positive >> shift) > ACT_MAX))
        if rate <= SATURATION_LIMIT:
            return shift, rate
    return MAX_SHIFT, float(np.mean((positive >> MAX_SHIFT) > ACT_MAX))


def quantize_model(model: FloatModel, calibration: np.ndarray):
    """Calibrated integer layers plus per-layer scale/shift records."""
    if calibration is None or len(calibration) == 0:
        raise ExportError("calibration set must not be empty")
    calibration = np.asarray(calibration)
    if calibration.ndim != 2 or calibration.shape[1] != model.input_width:
        raise ExportError("calibration inputs must be (n, input_width)")

    x = calibration.astype(np.int64)
    act_scale = 1.0   # raw byte features are exact integers
    int_layers = []
    records = []
    for i, layer in enumerate(model.layers):
        last = i == len(model.layers) - 1
        if isinstance(layer, FloatPool):
            il = _IntLayer(kind="maxpool1d", window=layer.window)
            x = _int_layer_forward(il, x, last)
            int_layers.append(il)
            records.append(LayerCalibration(
                index=i, kind="maxpool1d", weight_scale=0.0, requant_shift=0,
                saturation_rate=0.0, activation_scale=act_scale))
            continue
        if isinstance(layer, FloatConv):
            ints, w_scale = _quantize_weights(layer.weights)
            il = _IntLayer(kind="conv1d", weights=ints,
                           stride=layer.stride,
                           kernel_width=layer.kernel_width)
        elif isinstance(layer, FloatDense):
            ints, w_scale = _quantize_weights(layer.weights)
            il = _IntLayer(kind="dense", weights=ints)
        else:
            raise ExportError(f"unsupported layer {type(layer).__name__}")
        bias_scale = w_scale * act_scale
        il.biases = np.round(layer.biases / bias_scale).astype(np.int64)
        acc = _int_layer_forward(il, x, last)
        if last:
            il.shift, rate = 0, 0.0
            x = acc
        else:
            il.shift, rate = _pick_shift(acc)
            x = _requant(acc, il.shift)
            act_scale = bias_scale * (2 ** il.shift)
        int_layers.append(il)
        records.append(LayerCalibration(
            index=i, kind=il.kind, weight_scale=w_scale,
            requant_shift=il.shift, saturation_rate=rate,
            activation_scale=act_scale))
    return int_layers, records


def int_argmax(int_layers: list, x: np.ndarray) -> np.ndarray:
    """Batch argmax of the quantized model (exporter-side evaluator)."""
    x = np.asarray(x, dtype=np.int64)
    for i, layer in enumerate(int_layers):
        last = i == len(int_layers) - 1
        acc = _int_layer_forward(layer, x, last)
        if layer.kind == "maxpool1d" or last:
            x = acc
        else:
            x = _requant(acc, layer.shift)
    return np.argmax(x, axis=1)


def _model_document(model: FloatModel, int_layers: list) -> str:
    layers = []
    for il in int_layers:
        if il.kind == "conv1d":
            layers.append({
                "kind": "conv1d",
                "filters": int(il.weights.shape[0]),
                "kernel_width": int(il.kernel_width),
                "stride": int(il.stride),
                "requant_shift": int(il.shift),
                "weights": il.weights.tolist(),
                "biases": il.biases.tolist(),
            })
        elif il.kind == "maxpool1d":
            layers.append({"kind": "maxpool1d", "window": int(il.window)})
        else:
            layers.append({
                "kind": "dense",
                "in_width": int(il.weights.shape[1]),
                "out_width": int(il.weights.shape[0]),
                "requant_shift": int(il.shift),
                "weights": il.weights.tolist(),
                "biases": il.biases.tolist(),
            })
    doc = {
        "format": "switchdnn-model-v1",
        "input_width": model.input_width,
        "class_count": model.class_count,
        "metadata": {"exporter": "switchdnn-exporter",
                     "quantization": "symmetric-int8-pow2"},
        "layers": layers,
    }
    return json.dumps(doc, sort_keys=True)


def quantize_and_export(model: FloatModel, calibration: np.ndarray,
                        holdout_fraction: float = 0.25) -> ExportBundle:
    """Quantize on a calibration split and report argmax agreement on the rest."""
    calibration = np.asarray(calibration)
    if calibration.ndim != 2 or len(calibration) == 0:
        raise ExportError("calibration set must not be empty")
    n_holdout = int(len(calibration) * holdout_fraction)
    n_fit = len(calibration) - n_holdout
    if n_fit == 0:
        raise ExportError("calibration split leaves no fitting inputs")
    fit, holdout = calibration[:n_fit], calibration[n_fit:]

    int_layers, records = quantize_model(model, fit)

    if len(holdout):
        got = int_argmax(int_layers, holdout)
        want = np.array([model.argmax(x) for x in holdout])
        agreement = float(np.mean(got == want))
    else:
        agreement = float("nan")

    return ExportBundle(model_text=_model_document(model, int_layers),
                        calibration=records,
                        holdout_agreement=agreement)
