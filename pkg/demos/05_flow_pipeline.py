#!/usr/bin/env python3
"""End-to-end flow pipeline: trace -> flow table -> fabric -> majority votes.

Builds a labeled synthetic trace whose class is one header bit, a
hand-constructed model that reads exactly that bit, and streams everything
through the full fabric path.  More inference points never hurt accuracy.
"""

import json
import tempfile
from pathlib import Path

from switchdnn.cli import main
from switchdnn.flows import FlowRecord, verdict
from switchdnn.model import CANONICAL_INPUT_WIDTH, Dense, QuantizedModel, serialize_model

CLASS_BIT = 80  # MSB of prefix byte 10

w0 = [0] * CANONICAL_INPUT_WIDTH
w1 = [0] * CANONICAL_INPUT_WIDTH
w0[CLASS_BIT], w1[CLASS_BIT] = -1, 1
model = QuantizedModel(
    layers=(Dense(in_width=CANONICAL_INPUT_WIDTH, out_width=2,
                  weights=(tuple(w0), tuple(w1)), biases=(0, 0),
                  requant_shift=0),),
    input_width=CANONICAL_INPUT_WIDTH, class_count=2)

lines = []
tricky = {1, 3}  # class-1 flows whose first packet is disguised
for i in range(8):
    cls = i % 2
    for j in range(16):
        byte10 = (0x80 | i) if cls else i
        if j == 0 and i in tricky:
            byte10 ^= 0x80
        prefix = bytearray(68)
        prefix[10] = byte10
        ts = i * 10 ** 7 + j * 997
        lines.append(f"{ts},10.0.{i}.1,{1000 + i},10.1.{i}.2,80,6,"
                     f"{bytes(prefix).hex()},{cls}")

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    (tmp / "model.json").write_text(serialize_model(model))
    (tmp / "trace.txt").write_text("\n".join(lines) + "\n")
    rc = main(["run", "--model", str(tmp / "model.json"),
               "--trace", str(tmp / "trace.txt"),
               "--output", str(tmp / "report.json"),
               "--max-inference-point", "16"])
    assert rc == 0
    report = json.loads((tmp / "report.json").read_text())

print(f"\nflows: {report['flow_count']}, inferences: {report['inferences']}, "
      f"final accuracy: {report['accuracy']}")
print("per-flow votes (inference point, class):")
for flow in report["flows"]:
    print(f"  flow {flow['flow_id']:#010x} label {flow['label']} "
          f"votes {flow['votes']} -> verdict {flow['verdict']}")

print("\naccuracy by number of inference points used:")
for k in range(1, 6):
    correct = 0
    for flow in report["flows"]:
        rec = FlowRecord(key=None, flow_id=0)
        rec.votes = [tuple(v) for v in flow["votes"]]
        correct += int(verdict(rec, first_n=k) == flow["label"])
    print(f"  first {k} point(s): {correct}/{report['flow_count']}")
