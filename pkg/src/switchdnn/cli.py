"""Operator entry point: plan, run, verify, and report subcommands.

Reports are machine-readable JSON with a human summary on stdout.  Flags
mirror RunConfig one-to-one; SWITCHDNN_MODEL_PATH, SWITCHDNN_TRACE_PATH, and
SWITCHDNN_OUTPUT_PATH override the corresponding paths.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from . import flows as flowmod
from .fabric import build_clos, run_until_quiescent
from .flows import FlowTable, build_input, int_to_ip, parse_trace, record_vote, verdict
from .mapper import (
    FabricDescriptor,
    build_plan,
    compare_reference,
    estimate_resources,
)
from .model import ModelError, parse_model
from .runner import default_descriptor, differential_check
from .switchsim import DEFAULT_STAGE_BUDGET


@dataclass
class RunConfig:
    model_path: str = None
    trace_path: str = None
    output_path: str = None
    trace_output_path: str = None
    trace_format: str = "text"
    tiers: int = 0                      # 0 = derive from routing mode
    switches_per_tier: int = 0          # 0 = derive from the model
    pipelines_per_switch: int = 4
    multiply_backend: str = "tcam"
    routing_mode: str = "2-tier"
    max_inference_point: int = 1024
    strict_timestamps: bool = True
    seed: int = 0
    inputs: int = 100
    stage_budget: int = DEFAULT_STAGE_BUDGET


class CliError(Exception):
    pass


def _load_model(config: RunConfig):
    if not config.model_path:
        raise CliError("a model file is required (--model)")
    try:
        with open(config.model_path, "rb") as fh:
            return parse_model(fh)
    except OSError as e:
        raise CliError(f"cannot read model: {e}") from None
    except ModelError as e:
        raise CliError(f"invalid model: {e}") from None


def _descriptor(config: RunConfig, model) -> FabricDescriptor:
    if config.tiers or config.switches_per_tier:
        tiers = config.tiers or (2 if config.routing_mode == "2-tier" else 3)
        switches = config.switches_per_tier or max(
            config.pipelines_per_switch, len(model.weight_layers))
        return FabricDescriptor(tiers=tiers, switches_per_tier=switches,
                                pipelines_per_switch=config.pipelines_per_switch)
    return default_descriptor(model, config.routing_mode,
                              config.pipelines_per_switch)


def _write_json(path: str, doc) -> str:
    text = json.dumps(doc, sort_keys=True, indent=1) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


# --- plan ------------------------------------------------------------------------

def cmd_plan(config: RunConfig) -> int:
    model = _load_model(config)
    descriptor = _descriptor(config, model)
    plan = build_plan(model, descriptor, config.routing_mode)
    report = estimate_resources(model, plan, config.multiply_backend)
    comparison = compare_reference(report)

    doc = {
        "format": "switchdnn-plan-v1",
        "routing_mode": plan.routing_mode,
        "fabric": {
            "tiers": descriptor.tiers,
            "switches_per_tier": descriptor.switches_per_tier,
            "pipelines_per_switch": descriptor.pipelines_per_switch,
        },
        "layers": [{
            "ordinal": lp.ordinal,
            "name": lp.name,
            "model_index": lp.model_index,
            "kind": lp.kind,
            "switch": lp.switch,
            "key_scheme": lp.key_scheme,
            "pool_window": lp.pool_window,
            "partitions": [list(p) for p in lp.partitions],
            "table_entries": [len(p) * lp.key_dims[2] if lp.kind == "conv1d"
                              else len(p) * lp.in_width
                              for p in lp.partitions],
        } for lp in plan.layers],
        "transitions": [{
            "index": t.index,
            "source_switch": t.source_switch,
            "dest_switch": t.dest_switch,
            "dest_layer": t.dest_layer,
            "mode": t.mode,
        } for t in plan.transitions],
        "resources": {
            "backend": report.backend,
            "convention": report.convention,
            "product_table_note": report.product_table_note,
            "rows": [{
                "layer": r.name,
                "packets": r.packets_generated,
                "packets_emitted": r.packets_emitted,
                "ops": r.ops,
                "ops_total": r.ops_total,
                "ops_per_packet": r.ops_per_packet,
                "memory_bytes": r.memory_bytes,
            } for r in report.rows],
            "reference_comparison": comparison,
        },
    }
    out_path = config.output_path or "plan.json"
    _write_json(out_path, doc)

    print(f"plan written to {out_path}")
    print(f"{'layer':<8}{'packets':>10}{'ops/packet':>12}{'memory_B':>10}")
    for r in report.rows:
        print(f"{r.name:<8}{r.packets_generated:>10}{r.ops_per_packet:>12}"
              f"{r.memory_bytes:>10}")
    if comparison:
        print("reference deployment comparison "
              "(delta = ours - reference; conventions differ):")
        for row in comparison:
            print(f"  {row['layer']:<8} packets {row['packets']:>8} vs "
                  f"{row['packets_reference']:>6} | ops/pkt "
                  f"{row['ops_per_packet']:>8} vs "
                  f"{row['ops_per_packet_reference']:>6} | mem "
                  f"{row['memory_bytes']:>8} vs {row['memory_reference']:>6}")
    return 0


# --- run -------------------------------------------------------------------------

def cmd_run(config: RunConfig) -> int:
    model = _load_model(config)
    if not config.trace_path:
        raise CliError("a trace file is required (--trace)")
    try:
        with open(config.trace_path, "rb") as fh:
            trace_in = parse_trace(fh, config.trace_format)
    except OSError as e:
        raise CliError(f"cannot read trace: {e}") from None
    except flowmod.TraceError as e:
        raise CliError(f"invalid trace: {e}") from None

    descriptor = _descriptor(config, model)
    plan = build_plan(model, descriptor, config.routing_mode)
    fabric = build_clos(descriptor)
    fabric.install(model, plan, backend=config.multiply_backend,
                   stage_budget=config.stage_budget)

    table = FlowTable(max_inference_point=config.max_inference_point,
                      strict_timestamps=config.strict_timestamps)
    flow_order = []
    labels = {}
    inference_map = {}
    initial = []
    for pkt in trace_in:
        record, is_point = table.update(pkt)
        if record.packet_count == 1:
            flow_order.append(record.key)
        if pkt.label is not None and record.key not in labels:
            labels[record.key] = pkt.label
        if not is_point:
            continue
        values = build_input(record, pkt, model)
        inference_id = len(inference_map)
        inference_map[inference_id] = (record.key, record.packet_count)
        initial.extend(fabric.make_input_packets(values, inference_id))

    run_trace = run_until_quiescent(fabric, initial, record_events=True)
    for v in run_trace.verdicts:
        key, point = inference_map[v["flow"]]
        record_vote(table.records[key], point, v["class"])

    flow_rows = []
    correct = labeled = 0
    for key in flow_order:
        record = table.records[key]
        label = labels.get(key)
        cls = verdict(record) if record.votes else None
        if label is not None and cls is not None:
            labeled += 1
            correct += int(cls == label)
        flow_rows.append({
            "src_ip": int_to_ip(key.src_ip), "src_port": key.src_port,
            "dst_ip": int_to_ip(key.dst_ip), "dst_port": key.dst_port,
            "proto": key.proto,
            "flow_id": record.flow_id,
            "packet_count": record.packet_count,
            "min_iat_ns": record.min_iat,
            "max_iat_ns": record.max_iat,
            "votes": [[p, c] for p, c in sorted(record.votes)],
            "verdict": cls,
            "label": label,
        })

    layer_names = {lp.ordinal: lp.name for lp in plan.layers}
    report = {
        "format": "switchdnn-run-v1",
        "config": {
            "model_path": config.model_path,
            "trace_path": config.trace_path,
            "trace_format": config.trace_format,
            "routing_mode": config.routing_mode,
            "multiply_backend": config.multiply_backend,
            "max_inference_point": config.max_inference_point,
            "strict_timestamps": config.strict_timestamps,
            "seed": config.seed,
            "fabric": {"tiers": descriptor.tiers,
                       "switches_per_tier": descriptor.switches_per_tier,
                       "pipelines_per_switch": descriptor.pipelines_per_switch},
        },
        "flow_count": len(flow_rows),
        "inferences": len(inference_map),
        "skipped_non_ipv4": trace_in.skipped_non_ipv4,
        "flows": flow_rows,
        "accuracy": (correct / labeled) if labeled else None,
        "per_layer": [{
            "layer": layer_names[o],
            "packets": run_trace.packets_into_layer.get(o, 0),
            "packets_emitted": run_trace.packets_emitted_by_layer.get(o, 0),
            "ops": run_trace.tallies[o],
            "ops_total": sum(run_trace.tallies[o].values()),
        } for o in sorted(run_trace.tallies)],
        "hop_stats": run_trace.hop_stats,
        "steps": run_trace.steps,
    }
    out_path = config.output_path or "run-report.json"
    _write_json(out_path, report)
    if config.trace_output_path:
        with open(config.trace_output_path, "w", encoding="utf-8") as fh:
            fh.write(run_trace.to_jsonl())

    print(f"report written to {out_path}")
    print(f"flows: {len(flow_rows)}  inferences: {len(inference_map)}")
    if report["accuracy"] is not None:
        print(f"accuracy: {report['accuracy']:.4f} over {labeled} labeled flows")
    return 0


# --- verify ------------------------------------------------------------------------

def cmd_verify(config: RunConfig) -> int:
    model = _load_model(config)
    descriptor = _descriptor(config, model)
    doc = {
        "format": "switchdnn-verify-v1",
        "model": config.model_path,
        "inputs": config.inputs,
        "seed": config.seed,
        "backends": ["tcam", "shift-add"],
        "routing_mode": config.routing_mode,
        "divergences": [],
        "status": "pass",
    }
    if config.inputs <= 0:
        doc["warning"] = "no inputs requested; trivially passing"
        print("warning: N=0, nothing verified (trivial pass)")
    else:
        divergences = differential_check(
            model, n_inputs=config.inputs, seed=config.seed,
            routing_mode=config.routing_mode, descriptor=descriptor)
        doc["divergences"] = divergences
        doc["status"] = "pass" if not divergences else "fail"
    if config.output_path:
        _write_json(config.output_path, doc)

    if doc["status"] == "pass":
        print(f"verify: PASS ({config.inputs} inputs, both backends)")
        return 0
    first = doc["divergences"][0]
    print(f"verify: FAIL first divergence at input {first['input_index']}, "
          f"backend {first['backend']}, layer {first['layer']}, "
          f"position {first['position']}")
    return 2


# --- report ------------------------------------------------------------------------

def cmd_report(config: RunConfig) -> int:
    if not config.trace_path:
        raise CliError("a trace file is required (--trace)")
    try:
        with open(config.trace_path, "r", encoding="utf-8") as fh:
            lines = [json.loads(l) for l in fh if l.strip()]
    except OSError as e:
        raise CliError(f"cannot read trace: {e}") from None
    except json.JSONDecodeError as e:
        raise CliError(f"invalid trace log: {e}") from None
    summary = next((l for l in lines if l.get("record") == "summary"), None)
    if summary is None:
        raise CliError("trace log has no summary record")
    print(f"steps: {summary['steps']}  deliveries: {summary['deliveries']}")
    print(f"packets into layers: {summary['packets_into_layer']}")
    print(f"hop stats: {summary['hop_stats']}")
    for l in lines:
        if l.get("record") == "ops":
            total = sum(l["ops"].values())
            print(f"layer {l['layer']}: {total} ops {l['ops']}")
    verdicts = [l for l in lines if l.get("record") == "verdict"]
    for v in verdicts:
        print(f"verdict flow={v['flow']} class={v['class']}")
    print(f"verdicts: {len(verdicts)}")
    return 0


# --- argument plumbing ---------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--model", dest="model_path",
                   default=os.environ.get("SWITCHDNN_MODEL_PATH"))
    p.add_argument("--output", dest="output_path",
                   default=os.environ.get("SWITCHDNN_OUTPUT_PATH"))
    p.add_argument("--tiers", type=int, default=0)
    p.add_argument("--switches-per-tier", type=int, default=0)
    p.add_argument("--pipelines-per-switch", type=int, default=4)
    p.add_argument("--multiply-backend", choices=["tcam", "shift-add"],
                   default="tcam")
    p.add_argument("--routing-mode", choices=["2-tier", "3-tier"],
                   default="2-tier")
    p.add_argument("--max-inference-point", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stage-budget", type=int, default=DEFAULT_STAGE_BUDGET)
    strict = p.add_mutually_exclusive_group()
    strict.add_argument("--strict-timestamps", dest="strict_timestamps",
                        action="store_true", default=True)
    strict.add_argument("--lenient-timestamps", dest="strict_timestamps",
                        action="store_false")


def _add_trace(p: argparse.ArgumentParser):
    p.add_argument("--trace", dest="trace_path",
                   default=os.environ.get("SWITCHDNN_TRACE_PATH"))
    p.add_argument("--trace-format", choices=["text", "pcap"], default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchdnn",
        description="compile and simulate integer DNN inference on a "
                    "fabric of programmable switches")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="compile a model and report resources")
    _add_common(p)

    p = sub.add_parser("run", help="stream a trace through the fabric")
    _add_common(p)
    _add_trace(p)
    p.add_argument("--trace-out", dest="trace_output_path", default=None)

    p = sub.add_parser("verify", help="differential check against the oracle")
    _add_common(p)
    p.add_argument("--inputs", type=int, default=100)

    p = sub.add_parser("report", help="summarize a saved run trace")
    _add_trace(p)
    return parser


def config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    for name in vars(cfg):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    return cfg


_COMMANDS = {"plan": cmd_plan, "run": cmd_run, "verify": cmd_verify,
             "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    try:
        return _COMMANDS[args.command](cfg)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # planning/simulation failures surface with context
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
