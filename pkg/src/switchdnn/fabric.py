"""Clos fabric: topology, 2-tier/3-tier multicast routing, and the event loop.

Delivery is logical-time FIFO with a fixed total order (step, then switch id,
then pipeline id, then enqueue order), which makes every run byte-for-byte
reproducible.  Link latency is not modeled; hop counts are recorded on the
packets instead.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .mapper import FabricDescriptor, MappingPlan, build_weight_tables
from .model import QuantizedModel
from .switchsim import (
    DEFAULT_STAGE_BUDGET,
    NetPacket,
    SwitchSim,
    VERDICT,
    build_packets_for_layer,
)


class FabricError(RuntimeError):
    """Routing or topology failure."""


class SimulationError(RuntimeError):
    """Event loop failure (livelock bound exceeded, inconsistent state)."""


@dataclass
class MulticastJob:
    """One logical value/window dispatched to every pipeline of one switch."""

    source: tuple            # (switch id, pipeline); (-1, 0) for injection
    destination_switch: int
    mode: str                # "local" | "2-tier" | "3-tier"
    payload: NetPacket


@dataclass
class RunTrace:
    """Everything one simulation run produced, in deterministic order."""

    steps: int = 0
    events: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    layer_outputs: dict = field(default_factory=dict)   # (flow, ordinal) -> tuple
    packets_into_layer: dict = field(default_factory=dict)
    packets_emitted_by_layer: dict = field(default_factory=dict)
    tallies: dict = field(default_factory=dict)         # ordinal -> ops dict
    hop_stats: dict = field(default_factory=dict)
    deliveries: int = 0

    def verdict_for(self, flow: int):
        for v in self.verdicts:
            if v["flow"] == flow:
                return v
        return None

    def to_jsonl(self) -> str:
        """Line-delimited structured records; stable across identical runs."""
        lines = [json.dumps({"record": "summary", "steps": self.steps,
                             "deliveries": self.deliveries,
                             "packets_into_layer": {
                                 str(k): v for k, v
                                 in sorted(self.packets_into_layer.items())},
                             "packets_emitted_by_layer": {
                                 str(k): v for k, v
                                 in sorted(self.packets_emitted_by_layer.items())},
                             "hop_stats": self.hop_stats},
                            sort_keys=True)]
        for ev in self.events:
            lines.append(json.dumps({"record": "event", "data": ev},
                                    sort_keys=True))
        for key in sorted(self.layer_outputs):
            flow, ordinal = key
            lines.append(json.dumps(
                {"record": "layer_output", "flow": flow, "layer": ordinal,
                 "values": list(self.layer_outputs[key])}, sort_keys=True))
        for v in self.verdicts:
            lines.append(json.dumps({"record": "verdict", **v}, sort_keys=True))
        for ordinal in sorted(self.tallies):
            lines.append(json.dumps(
                {"record": "ops", "layer": ordinal,
                 "ops": self.tallies[ordinal]}, sort_keys=True))
        return "\n".join(lines) + "\n"


class Fabric:
    """A built Clos topology plus the per-switch simulators."""

    def __init__(self, descriptor: FabricDescriptor):
        descriptor.validate()
        self.descriptor = descriptor
        self.links = frozenset(descriptor.link_map())
        self.switches = {}      # switch id -> SwitchSim (lowest tier only)
        self.plan: MappingPlan = None
        self.model: QuantizedModel = None

    def install(self, model: QuantizedModel, plan: MappingPlan,
                backend: str = "tcam",
                stage_budget: int = DEFAULT_STAGE_BUDGET):
        if plan.fabric != self.descriptor:
            raise FabricError("plan was built for a different fabric")
        tables = build_weight_tables(model, plan)
        for lp in plan.layers:
            sw = SwitchSim(lp.switch, self.descriptor.pipelines_per_switch,
                           stage_budget=stage_budget, backend=backend)
            sw.install(lp, model.layers[lp.model_index],
                       {pip: tables[(lp.ordinal, pip)]
                        for pip in range(self.descriptor.pipelines_per_switch)})
            self.switches[lp.switch] = sw
        self.plan = plan
        self.model = model

    def make_input_packets(self, values, flow: int) -> list:
        """Feature-extractor output: the packets injected into the first layer."""
        first = self.plan.layers[0]
        if len(values) != first.in_width:
            raise FabricError(
                f"input width {len(values)} != first layer width {first.in_width}")
        kernel = first.key_dims[2] if first.kind == "conv1d" else 0
        return build_packets_for_layer(
            first.kind, kernel, first.stride, 0, list(values), flow)


def build_clos(descriptor: FabricDescriptor) -> Fabric:
    """Realize the descriptor; raises ClosError on an invalid shape."""
    return Fabric(descriptor)


# --- routing --------------------------------------------------------------------

def route_multicast(fabric: Fabric, job: MulticastJob) -> list:
    """Expand one job into its replica paths.

    Returns [(path, packet)] with one entry per destination pipeline, where a
    path is a list of (switch, arrival_pipe, departure_pipe) hops (-1 marks
    no port on that side).  Every replica of a job takes the same hop count.
    """
    desc = fabric.descriptor
    p = desc.pipelines_per_switch
    dst = job.destination_switch
    if desc.tier_of(dst) != 0:
        raise FabricError("multicast destinations are lowest-tier switches")
    src_sw, src_pipe = job.source

    if job.mode not in ("local", "2-tier", "3-tier"):
        raise FabricError(f"unknown routing mode {job.mode!r}")
    if job.mode == "local" or (job.mode == "2-tier" and src_sw == dst):
        # local traffic manager replication: zero inter-switch hops; in
        # 3-tier mode the ingress/egress are busy, so even a same-switch
        # destination takes the common four-hop procedure
        return [([(dst, r, -1)], _with_hops(job.payload, 0))
                for r in range(p)]

    if job.mode == "2-tier":
        if desc.tiers < 2:
            raise FabricError("2-tier routing needs an upper tier")
        a = desc.index_of(src_sw)
        d = desc.index_of(dst)
        out = []
        pkt = _with_hops(job.payload, 2)
        for r in range(p):
            upper = desc.switch_id(1, r)
            path = [(src_sw, src_pipe, r),
                    (upper, a % p, d % p),
                    (dst, r, -1)]
            out.append((path, pkt))
        return out

    if job.mode == "3-tier":
        if desc.tiers < 3:
            raise FabricError("3-tier routing needs three tiers")
        a = desc.index_of(src_sw)
        d = desc.index_of(dst)
        q = src_pipe
        mid = desc.switch_id(1, q)   # the only switch pipe q uplinks to
        out = []
        pkt = _with_hops(job.payload, 4)
        for r in range(p):
            top = desc.switch_id(2, r)
            second = desc.switch_id(1, r)
            path = [(src_sw, src_pipe, q),
                    (mid, a % p, r),
                    (top, q % p, r % p),
                    (second, r % p, d % p),   # the alignment hop
                    (dst, r, -1)]
            out.append((path, pkt))
        return out

    raise FabricError(f"unknown routing mode {job.mode!r}")


def _with_hops(pkt: NetPacket, hops: int) -> NetPacket:
    return NetPacket(flow_id=pkt.flow_id, layer_id=pkt.layer_id, kind=pkt.kind,
                     filter=pkt.filter, kernel_i=pkt.kernel_i,
                     kernel_j=pkt.kernel_j, position=pkt.position,
                     payload=pkt.payload, value=pkt.value, hop_count=hops)


def alignment_path(fabric: Fabric, src_sw: int, src_pipe: int,
                   dst_sw: int, dst_pipe: int) -> list:
    """Unicast path landing in a specific pipeline of an upper-tier switch.

    Used by the 3-tier scheme: ascend via the source pipeline's uplink, cross
    the top tier, and descend through the one switch whose downlink reaches
    the requested pipeline.
    """
    desc = fabric.descriptor
    p = desc.pipelines_per_switch
    if desc.tier_of(src_sw) != 0 or desc.tier_of(dst_sw) != 1:
        raise FabricError("alignment paths run from tier 0 into tier 1")
    if desc.tiers < 3:
        raise FabricError("alignment needs a third tier")
    a = desc.index_of(src_sw)
    b = desc.index_of(dst_sw)
    # arrival pipe from top switch u equals u mod P: pick the lowest match
    u = dst_pipe % p
    mid = desc.switch_id(1, src_pipe % p)
    top = desc.switch_id(2, u)
    return [(src_sw, -1, src_pipe),
            (mid, a % p, u % p),
            (top, src_pipe % p, b % p),
            (dst_sw, u % p, -1)]


# --- event loop -------------------------------------------------------------------

def run_until_quiescent(fabric: Fabric, initial: list, *,
                        parallel: bool = False,
                        record_events: bool = True,
                        max_steps: int = 10_000) -> RunTrace:
    """Drive the fabric until all queues drain; fully deterministic.

    ``initial`` holds the feature-extractor output packets; each becomes one
    local multicast job into its layer's switch.
    """
    if fabric.plan is None:
        raise SimulationError("no plan installed")
    trace = RunTrace()
    tally_base = {lp.ordinal: fabric.switches[lp.switch].tally.as_dict()
                  for lp in fabric.plan.layers}
    hop_stats = {"jobs": 0, "replicas": 0, "by_hops": {}}

    deliveries = []
    for pkt in initial:
        deliveries.extend(_dispatch(fabric, trace, hop_stats,
                                    MulticastJob((-1, 0), _dest_switch(fabric, pkt),
                                                 "local", pkt)))
    step = 0
    while deliveries:
        step += 1
        if step > max_steps:
            raise SimulationError(
                f"no quiescence after {max_steps} steps; "
                f"{len(deliveries)} deliveries pending")
        # total order: switch id, then pipeline, then enqueue order
        deliveries.sort(key=lambda d: (d[0], d[1]))
        trace.deliveries += len(deliveries)
        if parallel:
            groups = {}
            for d in deliveries:
                groups.setdefault(d[0], []).append(d)
            with ThreadPoolExecutor(max_workers=min(4, len(groups))) as pool:
                results = list(pool.map(
                    lambda kv: _process_switch_batch(
                        fabric, kv[1], step, record_events),
                    sorted(groups.items())))
            merged_next = []
            merged_events = []
            for nxt, evs in results:
                merged_next.extend(nxt)
                merged_events.extend(evs)
        else:
            merged_next, merged_events = _process_switch_batch(
                fabric, deliveries, step, record_events)

        for ev in merged_events:
            _absorb_event(fabric, trace, ev, record_events)
        next_deliveries = []
        for src_pipe, out_pkt, src_layer in merged_next:
            assert out_pkt.layer_id > src_layer, "layer id must increase"
            ordinal = src_layer
            trace.packets_emitted_by_layer[ordinal] = \
                trace.packets_emitted_by_layer.get(ordinal, 0) + 1
            if out_pkt.kind == VERDICT:
                continue  # verdicts were absorbed from the event stream
            transition = fabric.plan.transitions[out_pkt.layer_id]
            src_sw = fabric.plan.layers[ordinal].switch
            mode = transition.mode
            job = MulticastJob((src_sw, src_pipe), transition.dest_switch,
                               mode, out_pkt)
            next_deliveries.extend(_dispatch(fabric, trace, hop_stats, job))
        deliveries = next_deliveries

    trace.steps = step
    for lp in fabric.plan.layers:
        now = fabric.switches[lp.switch].tally.as_dict()
        base = tally_base[lp.ordinal]
        trace.tallies[lp.ordinal] = {k: now[k] - base[k] for k in now}
    trace.hop_stats = {"jobs": hop_stats["jobs"],
                       "replicas": hop_stats["replicas"],
                       "by_hops": {str(k): v for k, v in
                                   sorted(hop_stats["by_hops"].items())}}
    return trace


def _dest_switch(fabric: Fabric, pkt: NetPacket) -> int:
    try:
        return fabric.plan.layers[pkt.layer_id].switch
    except IndexError:
        raise SimulationError(f"packet for unknown layer {pkt.layer_id}") from None


def _dispatch(fabric, trace, hop_stats, job) -> list:
    replicas = route_multicast(fabric, job)
    hops = {pkt.hop_count for _, pkt in replicas}
    if len(hops) != 1:
        raise FabricError("replicas of one job must share a hop count")
    hop_stats["jobs"] += 1
    hop_stats["replicas"] += len(replicas)
    h = next(iter(hops))
    hop_stats["by_hops"][h] = hop_stats["by_hops"].get(h, 0) + len(replicas)
    layer = job.payload.layer_id
    trace.packets_into_layer[layer] = trace.packets_into_layer.get(layer, 0) + 1
    out = []
    for path, pkt in replicas:
        dst_sw, dst_pipe, _ = path[-1]
        out.append((dst_sw, dst_pipe, pkt))
    return out


def _process_switch_batch(fabric, deliveries, step, record_events):
    """Run one step's deliveries for (a subset of) switches, in order."""
    emissions = []
    events = []
    for dst_sw, dst_pipe, pkt in deliveries:
        switch = fabric.switches.get(dst_sw)
        if switch is None:
            raise SimulationError(f"delivery to switch {dst_sw} with no layer")
        before = switch.tally.total() if record_events else 0
        emitted, evs = switch.process_packet(dst_pipe, pkt)
        if record_events:
            events.append(("deliver", step, dst_sw, dst_pipe, pkt.kind,
                           pkt.layer_id, pkt.flow_id, pkt.position,
                           pkt.hop_count, switch.tally.total() - before))
        if evs:
            for ev in evs:
                events.append(ev + (step,))
        if emitted:
            layer = pkt.layer_id
            emissions.extend((src_pipe, out, layer) for src_pipe, out in emitted)
    return emissions, events


def _absorb_event(fabric, trace, ev, record_events):
    kind = ev[0]
    if kind == "layer_output":
        _, flow, ordinal, values, _step = ev
        trace.layer_outputs[(flow, ordinal)] = values
        if record_events:
            trace.events.append(["layer_output", _step, ordinal, flow,
                                 len(values)])
    elif kind == "verdict":
        _, flow, cls, scores, _step = ev
        trace.verdicts.append({"flow": flow, "class": cls,
                               "scores": list(scores)})
        if record_events:
            trace.events.append(["verdict", _step, flow, cls])
    elif kind == "deliver":
        trace.events.append(list(ev))
