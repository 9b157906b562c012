"""Quantized integer network IR, its JSON file format, and fixture generators.

All layers operate on flat sequences of unsigned 8-bit activations.  A conv
layer's output is the filter-major concatenation of its per-filter position
sequences, so no explicit flatten layer exists; dense layers index that
concatenated order directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

ACT_MIN, ACT_MAX = 0, 255
WEIGHT_MIN, WEIGHT_MAX = -128, 127
INT32_MIN, INT32_MAX = -(2 ** 31), 2 ** 31 - 1
MAX_REQUANT_SHIFT = 31

# Input layout consumed by the flow front end: 68 prefix bytes as single-bit
# features, then 8 bits min-IAT, 8 bits max-IAT, 8 bits folded flow id.
CANONICAL_INPUT_WIDTH = 68 * 8 + 16 + 8


class ModelError(ValueError):
    """Base class for model file and validation failures."""


class ModelFormatError(ModelError):
    """Source is not a well-formed model document."""


class ModelValidationError(ModelError):
    """Structurally parsed model violates an invariant."""


@dataclass(frozen=True)
class Conv1D:
    """Single-channel 1-D convolution over the flat input sequence."""

    filters: int
    kernel_width: int
    stride: int
    weights: tuple  # filters x kernel_width, signed 8-bit
    biases: tuple   # filters, signed 32-bit
    requant_shift: int

    kind = "conv1d"

    def out_len(self, in_len: int) -> int:
        return (in_len - self.kernel_width) // self.stride + 1


@dataclass(frozen=True)
class MaxPool1D:
    """Per-filter max over consecutive windows; colocated with its conv."""

    window: int

    kind = "maxpool1d"


@dataclass(frozen=True)
class Dense:
    """Fully connected layer over the flat activation vector."""

    in_width: int
    out_width: int
    weights: tuple  # out_width x in_width, signed 8-bit
    biases: tuple   # out_width, signed 32-bit
    requant_shift: int

    kind = "dense"


Layer = Union[Conv1D, MaxPool1D, Dense]


@dataclass(frozen=True)
class QuantizedModel:
    """Validated, immutable layered integer model."""

    layers: tuple
    input_width: int
    class_count: int
    metadata: tuple = ()  # sorted (key, value) string pairs

    def metadata_dict(self) -> dict:
        return dict(self.metadata)

    @property
    def weight_layers(self) -> tuple:
        """Indices of weight-bearing layers (conv and dense) in order."""
        return tuple(i for i, l in enumerate(self.layers)
                     if isinstance(l, (Conv1D, Dense)))


@dataclass(frozen=True)
class LayerGeom:
    """Resolved input/output widths of one layer within a model."""

    layer_index: int
    in_width: int
    out_width: int
    out_len: int = 0    # conv: output positions per filter
    filters: int = 0    # pool: filter count inherited from its conv
    seq_len: int = 0    # pool: per-filter input length


def _check_int(value, lo, hi, what):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ModelValidationError(f"{what} must be an integer, got {value!r}")
    if not lo <= value <= hi:
        raise ModelValidationError(f"{what} out of range [{lo}, {hi}]: {value}")


def model_geometry(model: QuantizedModel) -> list:
    """Walk the layer list and resolve every layer's input/output width.

    Raises ModelValidationError on any dimension mismatch.
    """
    geoms = []
    width = model.input_width
    prev_conv = None  # (filters, per-filter length) carried into a pool
    for idx, layer in enumerate(model.layers):
        if isinstance(layer, Conv1D):
            if width < layer.kernel_width:
                raise ModelValidationError(
                    f"layer {idx}: kernel width {layer.kernel_width} exceeds "
                    f"input width {width}")
            out_len = layer.out_len(width)
            geoms.append(LayerGeom(idx, width, layer.filters * out_len,
                                   out_len=out_len))
            prev_conv = (layer.filters, out_len)
            width = layer.filters * out_len
        elif isinstance(layer, MaxPool1D):
            if prev_conv is None:
                raise ModelValidationError(
                    f"layer {idx}: maxpool1d must immediately follow conv1d")
            filters, seq_len = prev_conv
            if seq_len % layer.window != 0:
                raise ModelValidationError(
                    f"layer {idx}: window {layer.window} does not divide conv "
                    f"output length {seq_len}")
            out_width = filters * (seq_len // layer.window)
            geoms.append(LayerGeom(idx, width, out_width,
                                   filters=filters, seq_len=seq_len))
            prev_conv = None
            width = out_width
        elif isinstance(layer, Dense):
            if layer.in_width != width:
                raise ModelValidationError(
                    f"layer {idx}: dense in_width {layer.in_width} does not "
                    f"match incoming width {width}")
            geoms.append(LayerGeom(idx, width, layer.out_width))
            prev_conv = None
            width = layer.out_width
        else:
            raise ModelValidationError(f"layer {idx}: unknown layer type")
    return geoms


def validate_model(model: QuantizedModel) -> list:
    """Check every structural invariant; returns the geometry list."""
    if not model.layers:
        raise ModelValidationError("model has no layers")
    _check_int(model.input_width, 1, 2 ** 20, "input_width")
    _check_int(model.class_count, 1, 2 ** 16, "class_count")

    for idx, layer in enumerate(model.layers):
        if isinstance(layer, Conv1D):
            _check_int(layer.filters, 1, 2 ** 16, f"layer {idx} filters")
            _check_int(layer.kernel_width, 1, 2 ** 16, f"layer {idx} kernel_width")
            _check_int(layer.stride, 1, 2 ** 16, f"layer {idx} stride")
            _check_int(layer.requant_shift, 0, MAX_REQUANT_SHIFT,
                       f"layer {idx} requant_shift")
            if len(layer.weights) != layer.filters:
                raise ModelValidationError(
                    f"layer {idx}: expected {layer.filters} weight rows")
            for f, row in enumerate(layer.weights):
                if len(row) != layer.kernel_width:
                    raise ModelValidationError(
                        f"layer {idx}: filter {f} kernel row length mismatch")
                for w in row:
                    _check_int(w, WEIGHT_MIN, WEIGHT_MAX, f"layer {idx} weight")
            if len(layer.biases) != layer.filters:
                raise ModelValidationError(f"layer {idx}: bias count mismatch")
            for b in layer.biases:
                _check_int(b, INT32_MIN, INT32_MAX, f"layer {idx} bias")
        elif isinstance(layer, MaxPool1D):
            _check_int(layer.window, 1, 2 ** 16, f"layer {idx} window")
        elif isinstance(layer, Dense):
            _check_int(layer.in_width, 1, 2 ** 20, f"layer {idx} in_width")
            _check_int(layer.out_width, 1, 2 ** 16, f"layer {idx} out_width")
            _check_int(layer.requant_shift, 0, MAX_REQUANT_SHIFT,
                       f"layer {idx} requant_shift")
            if len(layer.weights) != layer.out_width:
                raise ModelValidationError(
                    f"layer {idx}: expected {layer.out_width} weight rows")
            for j, row in enumerate(layer.weights):
                if len(row) != layer.in_width:
                    raise ModelValidationError(
                        f"layer {idx}: neuron {j} weight row length mismatch")
                for w in row:
                    _check_int(w, WEIGHT_MIN, WEIGHT_MAX, f"layer {idx} weight")
            if len(layer.biases) != layer.out_width:
                raise ModelValidationError(f"layer {idx}: bias count mismatch")
            for b in layer.biases:
                _check_int(b, INT32_MIN, INT32_MAX, f"layer {idx} bias")

    geoms = model_geometry(model)

    last = model.layers[-1]
    if not isinstance(last, Dense):
        raise ModelValidationError("final layer must be dense")
    if last.out_width != model.class_count:
        raise ModelValidationError(
            f"final dense out_width {last.out_width} != class_count "
            f"{model.class_count}")
    return geoms


def requantize(acc: int, shift: int) -> int:
    """Narrow a non-negative accumulator to an 8-bit activation.

    Arithmetic right shift then clamp to [0, 255]; callers apply ReLU first.
    """
    v = acc >> shift
    if v < 0:
        return 0
    return ACT_MAX if v > ACT_MAX else v


# --- file format ------------------------------------------------------------

FORMAT_TAG = "switchdnn-model-v1"


def _layer_to_obj(layer: Layer) -> dict:
    if isinstance(layer, Conv1D):
        return {
            "kind": "conv1d",
            "filters": layer.filters,
            "kernel_width": layer.kernel_width,
            "stride": layer.stride,
            "requant_shift": layer.requant_shift,
            "weights": [list(r) for r in layer.weights],
            "biases": list(layer.biases),
        }
    if isinstance(layer, MaxPool1D):
        return {"kind": "maxpool1d", "window": layer.window}
    return {
        "kind": "dense",
        "in_width": layer.in_width,
        "out_width": layer.out_width,
        "requant_shift": layer.requant_shift,
        "weights": [list(r) for r in layer.weights],
        "biases": list(layer.biases),
    }


def serialize_model(model: QuantizedModel) -> str:
    doc = {
        "format": FORMAT_TAG,
        "input_width": model.input_width,
        "class_count": model.class_count,
        "metadata": model.metadata_dict(),
        "layers": [_layer_to_obj(l) for l in model.layers],
    }
    return json.dumps(doc, sort_keys=True)


def _require(obj: dict, key: str, what: str):
    if key not in obj:
        raise ModelFormatError(f"{what} missing required field {key!r}")
    return obj[key]


def _int_field(obj: dict, key: str, what: str) -> int:
    v = _require(obj, key, what)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ModelFormatError(f"{what} field {key!r} must be an integer")
    return v


def _int_list(values, what: str) -> tuple:
    if not isinstance(values, list):
        raise ModelFormatError(f"{what} must be an array")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ModelFormatError(f"{what} must contain only integers")
    return tuple(values)


def _layer_from_obj(obj: dict, idx: int) -> Layer:
    what = f"layer {idx}"
    if not isinstance(obj, dict):
        raise ModelFormatError(f"{what} must be an object")
    kind = _require(obj, "kind", what)
    if kind == "conv1d":
        weights = _require(obj, "weights", what)
        if not isinstance(weights, list):
            raise ModelFormatError(f"{what} weights must be an array")
        return Conv1D(
            filters=_int_field(obj, "filters", what),
            kernel_width=_int_field(obj, "kernel_width", what),
            stride=_int_field(obj, "stride", what),
            requant_shift=_int_field(obj, "requant_shift", what),
            weights=tuple(_int_list(r, f"{what} weight row") for r in weights),
            biases=_int_list(_require(obj, "biases", what), f"{what} biases"),
        )
    if kind == "maxpool1d":
        return MaxPool1D(window=_int_field(obj, "window", what))
    if kind == "dense":
        weights = _require(obj, "weights", what)
        if not isinstance(weights, list):
            raise ModelFormatError(f"{what} weights must be an array")
        return Dense(
            in_width=_int_field(obj, "in_width", what),
            out_width=_int_field(obj, "out_width", what),
            requant_shift=_int_field(obj, "requant_shift", what),
            weights=tuple(_int_list(r, f"{what} weight row") for r in weights),
            biases=_int_list(_require(obj, "biases", what), f"{what} biases"),
        )
    raise ModelFormatError(f"{what} has unknown kind {kind!r}")


def parse_model(source) -> QuantizedModel:
    """Parse and validate a model document (str, bytes, or file object)."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ModelFormatError(f"model file is not UTF-8: {e}") from None
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"malformed model document: {e}") from None
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be an object")

    layers_obj = _require(doc, "layers", "model")
    if not isinstance(layers_obj, list):
        raise ModelFormatError("model field 'layers' must be an array")
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict) or not all(
            isinstance(k, str) and isinstance(v, str)
            for k, v in metadata.items()):
        raise ModelFormatError("model field 'metadata' must map strings to strings")

    model = QuantizedModel(
        layers=tuple(_layer_from_obj(o, i) for i, o in enumerate(layers_obj)),
        input_width=_int_field(doc, "input_width", "model"),
        class_count=_int_field(doc, "class_count", "model"),
        metadata=tuple(sorted(metadata.items())),
    )
    validate_model(model)
    return model


# --- fixture generators -----------------------------------------------------

def _auto_shift(fan_in: int) -> int:
    # Keep worst-case |acc| >> shift near the 8-bit range so desk-scale
    # inputs neither saturate everywhere nor vanish.
    worst = fan_in * ACT_MAX * -WEIGHT_MIN
    return min(MAX_REQUANT_SHIFT, max(0, worst.bit_length() - 10))


def random_model(seed: int, shape: list) -> QuantizedModel:
    """Deterministic random model from a shape list.

    Shape items: leading int is the input width; then ints (dense out_width),
    ("dense", out), ("conv", filters, kernel, stride), or ("pool", window).
    The final item must describe a dense layer; its width is the class count.
    """
    if not shape or isinstance(shape[0], tuple):
        raise ModelValidationError("shape must start with the input width")
    rng = np.random.default_rng(seed)
    width = shape[0]
    layers = []
    prev_conv = None
    for item in shape[1:]:
        if isinstance(item, int):
            item = ("dense", item)
        tag = item[0]
        if tag == "dense":
            out = item[1]
            weights = rng.integers(WEIGHT_MIN, WEIGHT_MAX + 1,
                                   size=(out, width), dtype=np.int64)
            biases = rng.integers(-(2 ** 15), 2 ** 15, size=out, dtype=np.int64)
            layers.append(Dense(
                in_width=width, out_width=out,
                weights=tuple(tuple(int(w) for w in row) for row in weights),
                biases=tuple(int(b) for b in biases),
                requant_shift=_auto_shift(width)))
            width = out
            prev_conv = None
        elif tag == "conv":
            _, filters, kernel, stride = item
            if width < kernel:
                raise ModelValidationError(
                    f"conv kernel {kernel} exceeds width {width}")
            weights = rng.integers(WEIGHT_MIN, WEIGHT_MAX + 1,
                                   size=(filters, kernel), dtype=np.int64)
            biases = rng.integers(-(2 ** 15), 2 ** 15, size=filters,
                                  dtype=np.int64)
            layer = Conv1D(
                filters=filters, kernel_width=kernel, stride=stride,
                weights=tuple(tuple(int(w) for w in row) for row in weights),
                biases=tuple(int(b) for b in biases),
                requant_shift=_auto_shift(kernel))
            out_len = layer.out_len(width)
            layers.append(layer)
            prev_conv = (filters, out_len)
            width = filters * out_len
        elif tag == "pool":
            _, window = item
            if prev_conv is None:
                raise ModelValidationError("pool must follow a conv layer")
            filters, seq_len = prev_conv
            if seq_len % window != 0:
                raise ModelValidationError(
                    f"pool window {window} does not divide length {seq_len}")
            layers.append(MaxPool1D(window=window))
            width = filters * (seq_len // window)
            prev_conv = None
        else:
            raise ModelValidationError(f"unknown shape item {item!r}")

    if not layers or not isinstance(layers[-1], Dense):
        raise ModelValidationError("shape must end with a dense layer")
    model = QuantizedModel(
        layers=tuple(layers),
        input_width=shape[0],
        class_count=layers[-1].out_width,
        metadata=(("seed", str(seed)),),
    )
    validate_model(model)
    return model


def canonical_model(input_width: int = 8, class_count: int = 2,
                    seed: int = 2024) -> QuantizedModel:
    """Desk-scale canonical fixture: conv 32, conv 64, dense 50/100/out.

    Kernel width 3, stride 1, pool window 2 throughout; biases are zero.
    The input width is a parameter because only the layer widths of the
    architecture are fixed; the default keeps a full simulation tractable.
    """
    rng = np.random.default_rng(seed)
    layers = []
    width = input_width
    arch = [("conv", 32, 3, 1), ("pool", 2), ("conv", 64, 3, 1), ("pool", 2),
            ("dense", 50), ("dense", 100), ("dense", class_count)]
    prev_conv = None
    for item in arch:
        if item[0] == "conv":
            _, filters, kernel, stride = item
            weights = rng.integers(WEIGHT_MIN, WEIGHT_MAX + 1,
                                   size=(filters, kernel), dtype=np.int64)
            layer = Conv1D(
                filters=filters, kernel_width=kernel, stride=stride,
                weights=tuple(tuple(int(w) for w in row) for row in weights),
                biases=(0,) * filters,
                requant_shift=_auto_shift(kernel))
            out_len = layer.out_len(width)
            layers.append(layer)
            prev_conv = (filters, out_len)
            width = filters * out_len
        elif item[0] == "pool":
            filters, seq_len = prev_conv
            layers.append(MaxPool1D(window=item[1]))
            width = filters * (seq_len // item[1])
            prev_conv = None
        else:
            out = item[1]
            weights = rng.integers(WEIGHT_MIN, WEIGHT_MAX + 1,
                                   size=(out, width), dtype=np.int64)
            layers.append(Dense(
                in_width=width, out_width=out,
                weights=tuple(tuple(int(w) for w in row) for row in weights),
                biases=(0,) * out,
                requant_shift=_auto_shift(width)))
            width = out
            prev_conv = None
    model = QuantizedModel(
        layers=tuple(layers),
        input_width=input_width,
        class_count=class_count,
        metadata=(("architecture", "conv32-conv64-dense50-dense100-out"),
                  ("seed", str(seed))),
    )
    validate_model(model)
    return model
