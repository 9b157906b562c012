#!/usr/bin/env python3
"""Compile the canonical model onto a Clos fabric and inspect the plan.

Shows the one-layer-per-switch assignment, the round-robin filter/neuron
partitions, the weight-key scheme, and the closed-form resource table with
the published hardware deployment counts side by side.
"""

from switchdnn.mapper import (
    FabricDescriptor,
    build_plan,
    compare_reference,
    estimate_resources,
)
from switchdnn.model import canonical_model

model = canonical_model()
fabric = FabricDescriptor(tiers=2, switches_per_tier=5, pipelines_per_switch=4)
plan = build_plan(model, fabric)

print("layer placement (one weight-bearing layer per lowest-tier switch):")
for lp in plan.layers:
    sizes = [len(p) for p in lp.partitions]
    pool = f", pool window {lp.pool_window}" if lp.pool_window else ""
    print(f"  {lp.name:<7} -> switch {lp.switch}, {sizes} per pipeline, "
          f"keys={lp.key_scheme}{pool}")

print("\nmulticast groups per layer transition:")
for t in plan.transitions:
    src = "feature extractor" if t.source_switch < 0 else f"switch {t.source_switch}"
    print(f"  {src} -> switch {t.dest_switch} (layer {t.dest_layer}, {t.mode})")

report = estimate_resources(model, plan)
print(f"\nresource estimate ({report.backend} backend):")
print(f"  convention: {report.convention}")
print(f"  note: {report.product_table_note}")
print(f"  {'layer':<8}{'packets':>9}{'ops/pkt':>9}{'memory_B':>10}{'emitted':>9}")
for r in report.rows:
    print(f"  {r.name:<8}{r.packets_generated:>9}{r.ops_per_packet:>9}"
          f"{r.memory_bytes:>10}{r.packets_emitted:>9}")

print("\npublished deployment counts (different input scale and counting "
      "convention; deltas expected):")
for row in compare_reference(report):
    print(f"  {row['layer']:<8} packets {row['packets']:>6} vs "
          f"{row['packets_reference']:>5}   ops/pkt {row['ops_per_packet']:>6} "
          f"vs {row['ops_per_packet_reference']:>6}   memory "
          f"{row['memory_bytes']:>7} vs {row['memory_reference']:>6}")
