"""Shared fixtures: random model shapes and desk-scale fabric helpers."""

import numpy as np
import pytest

from switchdnn.model import (
    CANONICAL_INPUT_WIDTH,
    Dense,
    QuantizedModel,
    random_model,
    validate_model,
)

# the class of a synthetic flow is the MSB of prefix byte 10 = bit feature 80
CLASS_BYTE = 10
CLASS_FEATURE = CLASS_BYTE * 8


def separability_model() -> QuantizedModel:
    """Single dense layer that reads exactly one prefix bit.

    Class-1 score equals the bit, class-0 score its negation, so the argmax
    (lowest index on ties) recovers the class exactly.
    """
    w0 = [0] * CANONICAL_INPUT_WIDTH
    w1 = [0] * CANONICAL_INPUT_WIDTH
    w0[CLASS_FEATURE] = -1
    w1[CLASS_FEATURE] = 1
    layer = Dense(in_width=CANONICAL_INPUT_WIDTH, out_width=2,
                  weights=(tuple(w0), tuple(w1)), biases=(0, 0),
                  requant_shift=0)
    model = QuantizedModel(layers=(layer,),
                           input_width=CANONICAL_INPUT_WIDTH, class_count=2)
    validate_model(model)
    return model


def synthetic_trace_lines(n_flows, packets_per_flow, tricky=()):
    """Labeled text-trace lines; ``tricky`` flows have packet 1 mislabeled.

    Tricky flows must be class 1 so the two-vote tie resolves correctly.
    """
    lines = []
    for i in range(n_flows):
        cls = i % 2
        assert not (i in tricky and cls != 1), "tricky flows must be class 1"
        for j in range(packets_per_flow):
            byte10 = (0x80 | (i & 0x3F)) if cls == 1 else (i & 0x7F)
            if j == 0 and i in tricky:
                byte10 ^= 0x80
            prefix = bytearray(68)
            prefix[CLASS_BYTE] = byte10
            prefix[0] = i & 0xFF
            ts = i * 10 ** 7 + j * 1013 + j * j
            lines.append(
                f"{ts},10.0.{i % 250}.1,{1000 + i},10.1.{i % 250}.2,80,6,"
                f"{bytes(prefix).hex()},{cls}")
    return lines


def random_shape(rng, max_weight_layers=3):
    """2-5 layers with every interface width <= 64.

    Keeps at most max_weight_layers + 1 weight-bearing layers so the model
    fits a four-switch tier.
    """
    width = int(rng.integers(6, 65))
    shape = [width]
    weight_layers = 0
    target = int(rng.integers(2, 6))
    guard = 0
    while len(shape) - 1 < target - 1 and weight_layers < max_weight_layers:
        guard += 1
        if guard > 50:
            break
        if rng.random() < 0.45 and width >= 6:
            filters = int(rng.integers(1, 5))
            kernel = int(rng.integers(2, 6))
            stride = int(rng.integers(1, 3))
            if kernel > width:
                continue
            out_len = (width - kernel) // stride + 1
            if out_len < 1 or filters * out_len > 64:
                continue
            shape.append(("conv", filters, kernel, stride))
            weight_layers += 1
            width = filters * out_len
            windows = [w for w in (2, 4) if out_len % w == 0]
            if windows and rng.random() < 0.6 and len(shape) - 1 < target - 1:
                shape.append(("pool", windows[0]))
                width = filters * (out_len // windows[0])
        else:
            out = int(rng.integers(1, 65))
            shape.append(("dense", out))
            weight_layers += 1
            width = out
    shape.append(("dense", int(rng.integers(2, 9))))
    return shape


def make_random_model(seed):
    rng = np.random.default_rng(seed)
    return random_model(int(rng.integers(0, 2 ** 31)), random_shape(rng))


@pytest.fixture
def rng():
    return np.random.default_rng(0xC105)
