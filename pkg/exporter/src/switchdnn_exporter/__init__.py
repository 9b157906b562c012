"""switchdnn-exporter: float training, 8-bit quantization, file emission."""

from .dataset import RawFlow, emit_bit_input_dataset
from .floatmodel import (
    ExportError,
    FloatConv,
    FloatDense,
    FloatModel,
    FloatPool,
    load_npz,
    save_npz,
)
from .quantize import ExportBundle, int_argmax, quantize_and_export, quantize_model

__all__ = [
    "ExportBundle", "ExportError", "FloatConv", "FloatDense", "FloatModel",
    "FloatPool", "RawFlow", "emit_bit_input_dataset", "int_argmax",
    "load_npz", "quantize_and_export", "quantize_model", "save_npz",
]
