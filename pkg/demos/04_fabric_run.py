#!/usr/bin/env python3
"""Drive one inference through the simulated switch fabric, both routings.

Every multiply in the packet path goes through the exact-match product table
(or the shift-add decomposition); the run is compared bit-for-bit against
the reference engine at every layer boundary.
"""

import numpy as np

from switchdnn.model import random_model
from switchdnn.reference import infer
from switchdnn.runner import build_fabric, compare_run, run_inference

model = random_model(11, [20, ("conv", 4, 3, 1), ("pool", 2),
                          ("dense", 10), ("dense", 3)])
rng = np.random.default_rng(1)
x = tuple(int(v) for v in rng.integers(0, 256, model.input_width))

for routing in ("2-tier", "3-tier"):
    for backend in ("tcam", "shift-add"):
        fabric, plan = build_fabric(model, routing_mode=routing,
                                    backend=backend)
        trace = run_inference(fabric, x, flow_id=0, record_events=True)
        v = trace.verdicts[0]
        problems = compare_run(model, trace, x, 0)
        print(f"{routing} / {backend:<9}: class {v['class']} "
              f"scores {v['scores']}, steps {trace.steps}, "
              f"deliveries {trace.deliveries}, "
              f"hops {trace.hop_stats['by_hops']}, "
              f"oracle match: {not problems}")

want = infer(model, x)
print(f"\nreference engine: class {want.argmax} scores {list(want.scores)}")

fabric, _ = build_fabric(model)
trace = run_inference(fabric, x, flow_id=7, record_events=True)
print("\nfirst few delivery events (step, switch, pipe, kind, layer, ops):")
shown = 0
for ev in trace.events:
    if ev[0] == "deliver":
        _, step, sw, pipe, kind, layer, _flow, pos, hops, ops = ev
        print(f"  step {step} switch {sw} pipe {pipe} {kind:<11} "
              f"layer {layer} pos {pos} hops {hops} ops {ops}")
        shown += 1
        if shown == 8:
            break
