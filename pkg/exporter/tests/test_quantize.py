"""Quantizer tests: scales, shifts, saturation bound, agreement report."""

import json

import numpy as np
import pytest

from switchdnn_exporter import (
    ExportError,
    FloatConv,
    FloatDense,
    FloatModel,
    FloatPool,
    int_argmax,
    quantize_and_export,
    quantize_model,
)
from switchdnn_exporter.quantize import SATURATION_LIMIT, _quantize_weights


def small_model(seed=0):
    rng = np.random.default_rng(seed)
    conv = FloatConv(filters=4, kernel_width=3, stride=1,
                     weights=rng.normal(0, 0.5, (4, 3)),
                     biases=rng.normal(0, 0.1, 4))
    # input 12 -> conv out 10 per filter -> pool 2 -> 4*5 = 20 wide
    dense1 = FloatDense(weights=rng.normal(0, 0.3, (6, 20)),
                        biases=rng.normal(0, 0.1, 6))
    out = FloatDense(weights=rng.normal(0, 0.3, (3, 6)),
                     biases=np.zeros(3))
    return FloatModel(layers=[conv, FloatPool(window=2), dense1, out],
                      input_width=12, class_count=3)


def calibration(n=64, width=12, seed=1):
    return np.random.default_rng(seed).integers(0, 256, size=(n, width))


class TestWeightQuantization:
    def test_all_zero_weights_stay_zero(self):
        ints, scale = _quantize_weights(np.zeros((3, 4)))
        assert scale == 1.0
        assert (ints == 0).all()

    def test_symmetric_extremes_hit_127(self):
        ints, scale = _quantize_weights(np.array([[-1.0, 1.0]]))
        assert ints.tolist() == [[-127, 127]]

    def test_range_never_exceeds_int8_symmetric(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            ints, _ = _quantize_weights(rng.normal(0, 3, (5, 7)))
            assert ints.min() >= -127 and ints.max() <= 127


class TestCalibration:
    def test_saturation_below_limit_on_hidden_layers(self):
        model = small_model()
        _, records = quantize_model(model, calibration())
        for rec in records[:-1]:
            assert rec.saturation_rate <= SATURATION_LIMIT, rec

    def test_empty_calibration_rejected(self):
        with pytest.raises(ExportError):
            quantize_model(small_model(), np.empty((0, 12)))

    def test_wrong_width_rejected(self):
        with pytest.raises(ExportError):
            quantize_model(small_model(), calibration(width=9))

    def test_final_layer_keeps_raw_scores(self):
        _, records = quantize_model(small_model(), calibration())
        assert records[-1].requant_shift == 0

    def test_deterministic(self):
        a = quantize_and_export(small_model(), calibration())
        b = quantize_and_export(small_model(), calibration())
        assert a.model_text == b.model_text


class TestExportBundle:
    def test_document_shape(self):
        bundle = quantize_and_export(small_model(), calibration())
        doc = json.loads(bundle.model_text)
        assert doc["format"] == "switchdnn-model-v1"
        assert doc["input_width"] == 12 and doc["class_count"] == 3
        kinds = [l["kind"] for l in doc["layers"]]
        assert kinds == ["conv1d", "maxpool1d", "dense", "dense"]
        for layer in doc["layers"]:
            if layer["kind"] == "maxpool1d":
                continue
            flat = [w for row in layer["weights"] for w in row]
            assert all(-127 <= w <= 127 for w in flat)
            assert 0 <= layer["requant_shift"] <= 31

    def test_agreement_reported(self, capsys):
        bundle = quantize_and_export(small_model(), calibration(n=80))
        assert 0.0 <= bundle.holdout_agreement <= 1.0
        # reported, not asserted-fatal: the summary carries the number
        print(bundle.summary())
        out = capsys.readouterr().out
        assert "holdout argmax agreement" in out

    def test_int_evaluator_matches_itself_batched(self):
        model = small_model()
        cal = calibration(n=40)
        int_layers, _ = quantize_model(model, cal)
        got = int_argmax(int_layers, cal)
        assert got.shape == (40,)
        again = int_argmax(int_layers, cal)
        assert (got == again).all()
