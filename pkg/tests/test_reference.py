"""Reference engine tests, including an independent naive loop oracle."""

import numpy as np
import pytest

from switchdnn.model import (
    Conv1D,
    Dense,
    MaxPool1D,
    QuantizedModel,
    random_model,
    validate_model,
)
from switchdnn.reference import (
    ClassScores,
    InferenceError,
    argmax_lowest,
    infer,
    layer_forward,
    layer_outputs,
)

from conftest import make_random_model


def naive_infer(model, values):
    """Second, independent evaluator: plain loops and native arithmetic."""
    x = list(values)
    out = None
    for i, layer in enumerate(model.layers):
        last = i == len(model.layers) - 1
        if isinstance(layer, Conv1D):
            out = []
            per_filter = []
            for f in range(layer.filters):
                seq = []
                pos = 0
                while pos * layer.stride + layer.kernel_width <= len(x):
                    acc = layer.biases[f]
                    for t in range(layer.kernel_width):
                        acc += layer.weights[f][t] * x[pos * layer.stride + t]
                    if acc < 0:
                        acc = 0
                    acc >>= layer.requant_shift
                    seq.append(min(acc, 255))
                    pos += 1
                per_filter.append(seq)
            out = [v for seq in per_filter for v in seq]
        elif isinstance(layer, MaxPool1D):
            out = []
            for start in range(0, len(x), layer.window):
                out.append(max(x[start:start + layer.window]))
        else:
            out = []
            for j in range(layer.out_width):
                acc = layer.biases[j]
                for t in range(layer.in_width):
                    acc += layer.weights[j][t] * x[t]
                if not last:
                    if acc < 0:
                        acc = 0
                    acc = min(acc >> layer.requant_shift, 255)
                out.append(acc)
        x = out
    best = max(x)
    return tuple(x), x.index(best)


class TestInferExamples:
    def test_all_zero_model(self):
        model = QuantizedModel(
            layers=(Dense(in_width=3, out_width=2, weights=((0, 0, 0),) * 2,
                          biases=(0, 0), requant_shift=0),),
            input_width=3, class_count=2)
        validate_model(model)
        result = infer(model, (9, 9, 9))
        assert result.scores == (0, 0)
        assert result.argmax == 0

    def test_single_dense_layer_row(self):
        model = QuantizedModel(
            layers=(Dense(in_width=3, out_width=1, weights=((1, 2, 3),),
                          biases=(0,), requant_shift=0),),
            input_width=3, class_count=1)
        validate_model(model)
        assert infer(model, (1, 1, 1)).scores == (6,)

    def test_matches_independent_loop_oracle(self):
        model = random_model(42, [10, ("conv", 2, 3, 1), ("pool", 2),
                                  ("dense", 5), ("dense", 3)])
        rng = np.random.default_rng(42)
        for _ in range(20):
            x = tuple(int(v) for v in rng.integers(0, 256, model.input_width))
            got = infer(model, x)
            want_scores, want_argmax = naive_infer(model, x)
            assert got.scores == want_scores
            assert got.argmax == want_argmax

    def test_many_random_models_match_naive(self):
        for seed in range(25):
            model = make_random_model(seed + 1000)
            rng = np.random.default_rng(seed)
            x = tuple(int(v) for v in rng.integers(0, 256, model.input_width))
            got = infer(model, x)
            want_scores, want_argmax = naive_infer(model, x)
            assert got.scores == want_scores
            assert got.argmax == want_argmax

    def test_width_mismatch(self):
        model = random_model(1, [4, 2])
        with pytest.raises(InferenceError):
            infer(model, (1, 2, 3))


class TestLayerForward:
    def test_maxpool_window2(self):
        assert layer_forward(MaxPool1D(window=2), (3, 1, 7, 2)) == (3, 7)

    def test_conv_relu_clamps_negative(self):
        conv = Conv1D(filters=1, kernel_width=2, stride=1,
                      weights=((1, -1),), biases=(0,), requant_shift=0)
        assert layer_forward(conv, (5, 5, 9)) == (0, 0)

    def test_dense_identity(self):
        layer = Dense(in_width=2, out_width=2, weights=((1, 0), (0, 1)),
                      biases=(0, 0), requant_shift=0)
        assert layer_forward(layer, (4, 9)) == (4, 9)

    def test_infer_is_composition_of_layer_forward(self):
        model = make_random_model(77)
        rng = np.random.default_rng(7)
        x = tuple(int(v) for v in rng.integers(0, 256, model.input_width))
        out = x
        for i, layer in enumerate(model.layers):
            out = layer_forward(layer, out,
                                output_layer=(i == len(model.layers) - 1))
        assert out == infer(model, x).scores
        assert layer_outputs(model, x)[-1] == out


class TestProperties:
    def test_relu_idempotent_inside_forward(self):
        # applying a hidden dense layer twice to its own output changes
        # nothing when it is the identity with shift 0 (ReLU idempotence)
        layer = Dense(in_width=3, out_width=3,
                      weights=((1, 0, 0), (0, 1, 0), (0, 0, 1)),
                      biases=(0, 0, 0), requant_shift=0)
        once = layer_forward(layer, (5, 0, 200))
        assert layer_forward(layer, once) == once

    def test_maxpool_equals_bruteforce_windows(self, rng):
        for _ in range(50):
            window = int(rng.choice([1, 2, 4, 8]))
            chunks = int(rng.integers(1, 9))
            seq = [int(v) for v in rng.integers(0, 256, window * chunks)]
            got = layer_forward(MaxPool1D(window=window), seq)
            want = tuple(max(seq[i:i + window])
                         for i in range(0, len(seq), window))
            assert got == want

    def test_determinism(self):
        model = make_random_model(31)
        x = tuple(int(v) for v in
                  np.random.default_rng(3).integers(0, 256, model.input_width))
        assert infer(model, x) == infer(model, x)

    def test_argmax_lowest_index_tie_break(self):
        assert argmax_lowest((5, 5, 1)) == 0
        assert argmax_lowest((1, 5, 5)) == 1
        assert ClassScores((0, 0), 0).argmax == 0
