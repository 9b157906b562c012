#!/usr/bin/env python3
"""Run the golden integer inference engine layer by layer.

The reference engine is the oracle the distributed simulation must match
bit-for-bit: conv/dense accumulate in 32 bits, hidden layers apply ReLU and
requantization, and the output layer returns raw scores.
"""

import numpy as np

from switchdnn.model import canonical_model
from switchdnn.reference import infer, layer_outputs

model = canonical_model()
rng = np.random.default_rng(42)
x = tuple(int(v) for v in rng.integers(0, 256, model.input_width))
print(f"input ({model.input_width} features): {x}")

outs = layer_outputs(model, x)
for layer, out in zip(model.layers, outs):
    head = ", ".join(str(v) for v in out[:8])
    more = " ..." if len(out) > 8 else ""
    print(f"  {layer.kind:<10} -> {len(out):>5} values: [{head}{more}]")

scores = infer(model, x)
print(f"\nraw class scores: {scores.scores}")
print(f"argmax (lowest index wins ties): class {scores.argmax}")
