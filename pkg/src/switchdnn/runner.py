"""Harness that ties planning, fabric construction, and oracle checks together."""

from __future__ import annotations

import numpy as np

from . import reference
from .fabric import Fabric, build_clos, run_until_quiescent
from .mapper import FabricDescriptor, build_plan
from .model import Conv1D, Dense, MaxPool1D, QuantizedModel
from .switchsim import DEFAULT_STAGE_BUDGET


def default_descriptor(model: QuantizedModel,
                       routing_mode: str = "2-tier",
                       pipelines: int = 4) -> FabricDescriptor:
    """Smallest fabric that fits the model under the requested routing."""
    tiers = 2 if routing_mode == "2-tier" else 3
    switches = max(pipelines, len(model.weight_layers))
    return FabricDescriptor(tiers=tiers, switches_per_tier=switches,
                            pipelines_per_switch=pipelines)


def build_fabric(model: QuantizedModel, descriptor: FabricDescriptor = None,
                 routing_mode: str = "2-tier", backend: str = "tcam",
                 stage_budget: int = DEFAULT_STAGE_BUDGET):
    """Plan the model onto a fabric and install it; returns (fabric, plan)."""
    if descriptor is None:
        descriptor = default_descriptor(model, routing_mode)
    plan = build_plan(model, descriptor, routing_mode)
    fabric = build_clos(descriptor)
    fabric.install(model, plan, backend=backend, stage_budget=stage_budget)
    return fabric, plan


def run_inference(fabric: Fabric, values, flow_id: int, *,
                  record_events: bool = False, parallel: bool = False):
    """One end-to-end inference through the fabric; returns the RunTrace."""
    initial = fabric.make_input_packets(values, flow_id)
    return run_until_quiescent(fabric, initial, record_events=record_events,
                               parallel=parallel)


def expected_layer_outputs(model: QuantizedModel, values) -> dict:
    """Reference per-layer vectors as the fabric transmits them.

    Keyed by weight-layer ordinal; a colocated pool folds into its conv
    layer's entry, and the final entry holds the raw class scores.
    """
    outs = reference.layer_outputs(model, values)
    expected = {}
    ordinal = 0
    for idx, layer in enumerate(model.layers):
        if isinstance(layer, (Conv1D, Dense)):
            out = outs[idx]
            if idx + 1 < len(model.layers) and \
                    isinstance(model.layers[idx + 1], MaxPool1D):
                out = outs[idx + 1]
            expected[ordinal] = out
            ordinal += 1
    return expected


def random_input(rng, width: int) -> tuple:
    return tuple(int(v) for v in rng.integers(0, 256, size=width))


def compare_run(model: QuantizedModel, trace, values, flow_id: int) -> list:
    """Bit-for-bit comparison of one run against the reference engine.

    Returns a list of divergence dicts (empty when the run matches).
    """
    problems = []
    expected = expected_layer_outputs(model, values)
    for ordinal, want in expected.items():
        got = trace.layer_outputs.get((flow_id, ordinal))
        if got is None:
            problems.append({"layer": ordinal, "position": None,
                             "kind": "missing layer output"})
            continue
        if got != want:
            pos = next(i for i, (a, b) in enumerate(zip(got, want)) if a != b)
            problems.append({"layer": ordinal, "position": pos,
                             "kind": "activation mismatch",
                             "got": got[pos], "want": want[pos]})
    scores = reference.infer(model, values)
    v = trace.verdict_for(flow_id)
    if v is None:
        problems.append({"layer": None, "position": None,
                         "kind": "missing verdict"})
    else:
        if tuple(v["scores"]) != scores.scores:
            pos = next(i for i, (a, b)
                       in enumerate(zip(v["scores"], scores.scores)) if a != b)
            problems.append({"layer": len(expected) - 1, "position": pos,
                             "kind": "score mismatch"})
        if v["class"] != scores.argmax:
            problems.append({"layer": len(expected) - 1, "position": None,
                             "kind": "verdict mismatch",
                             "got": v["class"], "want": scores.argmax})
    return problems


def differential_check(model: QuantizedModel, *, n_inputs: int, seed: int,
                       backends=("tcam", "shift-add"),
                       routing_mode: str = "2-tier",
                       descriptor: FabricDescriptor = None) -> list:
    """Distributed runs vs the reference engine, and both multiply backends
    against each other, over seeded random inputs.

    Returns sorted divergence records; empty means everything matched.
    """
    divergences = []
    fabrics = {b: build_fabric(model, descriptor, routing_mode, b)[0]
               for b in backends}
    rng = np.random.default_rng(seed)
    for i in range(n_inputs):
        values = random_input(rng, model.input_width)
        traces = {}
        for b in backends:
            trace = run_inference(fabrics[b], values, flow_id=i)
            traces[b] = trace
            for problem in compare_run(model, trace, values, i):
                divergences.append({"input_index": i, "backend": b, **problem})
        if len(backends) == 2:
            a, b = backends
            for key in traces[a].layer_outputs:
                if traces[a].layer_outputs[key] != \
                        traces[b].layer_outputs.get(key):
                    divergences.append({
                        "input_index": i, "backend": f"{a} vs {b}",
                        "layer": key[1], "position": None,
                        "kind": "backend disagreement"})
    divergences.sort(key=lambda d: (d["input_index"], str(d["backend"]),
                                    str(d["layer"])))
    return divergences
