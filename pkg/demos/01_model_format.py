#!/usr/bin/env python3
"""Walk through the quantized model IR and its JSON file format.

Builds the canonical five-layer fixture, round-trips it through the
serializer, and shows the requantization rule that narrows 32-bit
accumulators back to 8-bit activations.
"""

from switchdnn.model import (
    canonical_model,
    model_geometry,
    parse_model,
    random_model,
    requantize,
    serialize_model,
)

model = canonical_model()
print("canonical fixture:")
print(f"  input width {model.input_width}, classes {model.class_count}")
for i, layer in enumerate(model.layers):
    geom = model_geometry(model)[i]
    print(f"  layer {i}: {layer.kind:<10} width {geom.in_width:>6} -> "
          f"{geom.out_width:>6}")

text = serialize_model(model)
print(f"\nserialized document: {len(text)} bytes")
again = parse_model(text)
print(f"round-trip identity: {again == model}")

print("\nrequantization (arithmetic shift then clamp to [0, 255]):")
for acc, shift in ((512, 1), (0, 7), (300, 2), (1 << 20, 4)):
    print(f"  acc={acc:<8} shift={shift} -> {requantize(acc, shift)}")

print("\nseeded random models are reproducible:")
a = random_model(7, [8, ("dense", 4), ("dense", 2)])
b = random_model(7, [8, ("dense", 4), ("dense", 2)])
print(f"  same seed, same model: {a == b}")
print(f"  weights: {sum(len(r) for l in a.layers for r in l.weights)} "
      f"(expected 8*4 + 4*2 = 40)")
