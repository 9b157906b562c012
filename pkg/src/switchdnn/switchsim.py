"""One PISA-style switch: per-pipeline packet processing with switch-legal ops.

Inside the packet paths, activations and weights are only ever combined
through table lookups, shifts, adds, and compares; native multiplication is
confined to the test oracles.  Every action is tallied per category so the
mapper's closed-form resource estimates can be checked against real runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .mapper import LayerPlan, weight_index
from .model import INT32_MAX, INT32_MIN, requantize

CONV_INPUT = "conv_input"
POOL_RESULT = "pool_result"
DENSE_INPUT = "dense_input"
VERDICT = "verdict"

_VALUE_KINDS = (POOL_RESULT, DENSE_INPUT, VERDICT)

DEFAULT_STAGE_BUDGET = 12
SHIFT_ADD_STAGES = 1 + 3  # one parallel shift stage, three reduction stages


class SwitchSimError(Exception):
    """Base class for switch simulation failures."""


class NotInstalledError(SwitchSimError):
    """Packet arrived for a layer this switch does not run."""


class MalformedPacketError(SwitchSimError):
    """Packet identifiers are inconsistent with the installed layer."""


class WrongSwitchError(SwitchSimError):
    """Plan slice targets a different switch."""


class DuplicateKeyError(SwitchSimError):
    """Weight table key installed twice."""


class DuplicateArrivalError(SwitchSimError):
    """A pool window position or staged result arrived twice."""


class StageBudgetError(SwitchSimError):
    """A packet needed more dependent stages than the pipeline allows."""


@dataclass(slots=True)
class NetPacket:
    """Simulated packet; the header carries all layer/position identifiers."""

    flow_id: int
    layer_id: int
    kind: str
    filter: int = 0
    kernel_i: int = 0
    kernel_j: int = 0
    position: int = 0
    payload: tuple = None
    value: int = 0
    hop_count: int = 0


def validate_packet(pkt: NetPacket, kernel_width: int = 0):
    """Enforce the payload/value exclusivity invariant."""
    if pkt.kind == CONV_INPUT:
        if pkt.payload is None:
            raise MalformedPacketError("conv packet without payload")
        if kernel_width and len(pkt.payload) != kernel_width:
            raise MalformedPacketError(
                f"conv payload length {len(pkt.payload)} != kernel {kernel_width}")
    elif pkt.kind in _VALUE_KINDS:
        if pkt.payload is not None:
            raise MalformedPacketError(f"{pkt.kind} packet must not carry a payload")
    else:
        raise MalformedPacketError(f"unknown packet kind {pkt.kind!r}")


# --- switch-legal arithmetic --------------------------------------------------

_PRODUCT_TABLE = None
_POPCOUNT8 = [bin(x).count("1") for x in range(256)]


def _build_product_table() -> list:
    # v*w for all pairs via repeated addition: v·w = (v-1)·w + w.
    table = [0 for _ in range(65536)]
    for w in range(-128, 128):
        idx = w & 0xFF
        acc = 0
        base = idx
        for v in range(256):
            table[(v << 8) | base] = acc
            acc += w
    return table


def product_table() -> list:
    """Materialized 2^16-entry exact-match product table (signed 16-bit values)."""
    global _PRODUCT_TABLE
    if _PRODUCT_TABLE is None:
        _PRODUCT_TABLE = _build_product_table()
        assert len(_PRODUCT_TABLE) == 2 ** 16
    return _PRODUCT_TABLE


def tcam_product(v: int, w: int) -> int:
    """Single-lookup multiply keyed by the 16-bit concatenation value|weight."""
    return product_table()[(v << 8) | (w & 0xFF)]


def shift_add_mult(v: int, w: int) -> int:
    """Multiply by decomposing the 8-bit weight into shifts plus a 3-stage
    balanced reduction; the fixed pipeline cost is SHIFT_ADD_STAGES."""
    mag = -w if w < 0 else w
    terms = [(v << b) if (mag >> b) & 1 else 0 for b in range(8)]
    while len(terms) > 1:  # 8 -> 4 -> 2 -> 1: three reduction stages
        terms = [terms[i] + terms[i + 1] for i in range(0, len(terms), 2)]
    return -terms[0] if w < 0 else terms[0]


def relu_msb(acc: int) -> int:
    """Zero the value when its sign bit (MSB of the 32-bit word) is set."""
    assert INT32_MIN <= acc <= INT32_MAX, "value exceeds 32-bit range"
    return 0 if (acc >> 31) & 1 else acc


def is_power_of_two(n: int) -> bool:
    """n AND (n-1) vanishes exactly for powers of two (n >= 1)."""
    if n < 1:
        raise ValueError("count must be >= 1")
    return (n & (n - 1)) == 0


def tree_max(values) -> tuple:
    """Balanced comparison-tree max; returns (max, tree depth)."""
    work = list(values)
    depth = 0
    while len(work) > 1:
        nxt = []
        for i in range(0, len(work) - 1, 2):
            a, b = work[i], work[i + 1]
            nxt.append(a if a >= b else b)
        if len(work) % 2:
            nxt.append(work[-1])
        work = nxt
        depth += 1
    return work[0], depth


class OpTally:
    """Per-category ALU action counts (the resource-report oracle side)."""

    __slots__ = ("lookups", "adds", "compares", "shifts", "registers")

    def __init__(self):
        self.lookups = 0
        self.adds = 0
        self.compares = 0
        self.shifts = 0
        self.registers = 0

    def total(self) -> int:
        return (self.lookups + self.adds + self.compares + self.shifts
                + self.registers)

    def as_dict(self) -> dict:
        return {"lookups": self.lookups, "adds": self.adds,
                "compares": self.compares, "shifts": self.shifts,
                "registers": self.registers}


def build_packets_for_layer(kind: str, kernel: int, stride: int,
                            layer_ordinal: int, values, flow: int,
                            value_kind: str = DENSE_INPUT,
                            per_filter_out: int = 0) -> list:
    """Generate the packets a layer consumes from a flat activation vector.

    Conv layers receive one packet per output position carrying the kernel
    window; dense layers receive one single-value packet per feature, in
    feature order (the dense cursor depends on that order).
    """
    packets = []
    if kind == "conv1d":
        out_len = (len(values) - kernel) // stride + 1
        for p in range(out_len):
            start = p * stride
            packets.append(NetPacket(
                flow_id=flow, layer_id=layer_ordinal, kind=CONV_INPUT,
                position=p, payload=tuple(values[start:start + kernel])))
    else:
        for i, v in enumerate(values):
            fil = i // per_filter_out if per_filter_out else 0
            packets.append(NetPacket(
                flow_id=flow, layer_id=layer_ordinal, kind=value_kind,
                filter=fil, position=i, value=v))
    return packets


class SwitchSim:
    """State and packet handlers for one lowest-tier switch (one layer)."""

    def __init__(self, switch_id: int, pipelines: int,
                 stage_budget: int = DEFAULT_STAGE_BUDGET,
                 backend: str = "tcam"):
        if backend not in ("tcam", "shift-add"):
            raise SwitchSimError(f"unknown multiply backend {backend!r}")
        self.switch_id = switch_id
        self.pipelines = pipelines
        self.stage_budget = stage_budget
        self.backend = backend
        self.plan: LayerPlan = None
        self.tally = OpTally()
        # install-time layer description
        self._owned = None          # per pipe: tuple of item ids
        self._keys = None           # per pipe: {item: [table keys]}
        self._tables = None         # per pipe: {key: weight}
        self._biases = None
        self._expected = None       # per pipe: staged results per flow
        self._active_pipes = 0
        self._ingress_depth = 0
        self._egress_depth = 0
        # per-flow transient state
        self._staged = {}           # flow -> {pos: value}
        self._staged_count = {}     # (flow, pipe) -> int
        self._pipes_done = {}       # flow -> int
        self._cursor = {}           # (flow, pipe) -> int
        self._acc = {}              # (flow, pipe) -> [acc per owned neuron]
        self._pool = {}             # (flow, pipe, filter, window) -> {pos: value}

    # --- install ---------------------------------------------------------------

    def install(self, plan_slice: LayerPlan, layer, tables: dict):
        """Populate weight tables and zero all transient state.

        ``tables`` maps pipeline -> {key: weight} as built by the mapper.
        """
        if plan_slice.switch != self.switch_id:
            raise WrongSwitchError(
                f"slice targets switch {plan_slice.switch}, this is "
                f"{self.switch_id}")
        if self.plan is not None:
            raise DuplicateKeyError("a layer is already installed; weight keys "
                                    "would collide")
        if len(plan_slice.partitions) != self.pipelines:
            raise SwitchSimError("partition count != pipelines")
        self.plan = plan_slice
        self._tables = []
        self._keys = []
        self._owned = plan_slice.partitions
        for pip in range(self.pipelines):
            table = {}
            for key, w in tables[pip].items():
                if key in table:
                    raise DuplicateKeyError(f"duplicate weight key {key}")
                table[key] = w
            self._tables.append(table)
            if plan_slice.kind == "conv1d":
                kernel = plan_slice.key_dims[2]
                self._keys.append({
                    f: [weight_index(f, 0, j, plan_slice.key_dims,
                                     plan_slice.key_scheme)
                        for j in range(kernel)]
                    for f in plan_slice.partitions[pip]})
            else:
                self._keys.append({
                    j: [weight_index(j, 0, i, plan_slice.key_dims,
                                     plan_slice.key_scheme)
                        for i in range(plan_slice.in_width)]
                    for j in plan_slice.partitions[pip]})
        self._biases = layer.biases
        self._shift = layer.requant_shift

        mult = 1 if self.backend == "tcam" else SHIFT_ADD_STAGES
        if plan_slice.kind == "conv1d":
            per_filter = plan_slice.out_len // plan_slice.pool_window \
                if plan_slice.pool_window else plan_slice.out_len
            self._expected = [len(o) * per_filter for o in self._owned]
            # staging offsets so the packet path never multiplies indices
            self._stage_base = {f: f * per_filter
                                for owned in self._owned for f in owned}
            kernel = plan_slice.key_dims[2]
            # fetch, multiply, accumulate tree (k products + bias), relu, requant
            self._ingress_depth = 1 + mult + math.ceil(math.log2(kernel + 1)) + 2
            self._egress_depth = 1 + (
                math.ceil(math.log2(plan_slice.pool_window))
                if plan_slice.pool_window > 1 else 0)
        else:
            self._expected = [len(o) for o in self._owned]
            # cursor, fetch, multiply, accumulate; completion adds bias (+relu,
            # requant on hidden layers) on the same traversal
            self._ingress_depth = 2 + mult + 1 + \
                (1 if plan_slice.is_final else 3)
            self._egress_depth = 1
        self._active_pipes = sum(1 for e in self._expected if e > 0)
        worst = max(self._ingress_depth, self._egress_depth)
        if worst > self.stage_budget:
            raise StageBudgetError(
                f"packet traversal needs {worst} dependent stages, budget is "
                f"{self.stage_budget}")

    def table_entry_count(self, pipeline: int) -> int:
        return len(self._tables[pipeline])

    def memory_bytes(self) -> int:
        """Installed-state footprint under the resource-report convention:
        1-byte table entries, 4-byte biases, transient state sized for one
        in-flight inference.  The shared product table is counted separately.
        """
        plan = self.plan
        weights = sum(len(t) for t in self._tables)
        owned_total = sum(len(o) for o in self._owned)
        biases = 4 * owned_total
        if plan.kind == "conv1d":
            length = plan.out_len
            if plan.pool_window:
                state = owned_total * (length + math.ceil(length / 8)) \
                    + owned_total * (length // plan.pool_window)
            else:
                state = owned_total * length
            return weights + biases + state
        staged = 4 * owned_total if plan.is_final else owned_total
        return weights + biases + 4 * owned_total + 4 * self.pipelines + staged

    # --- packet processing --------------------------------------------------------

    def process_packet(self, pipeline: int, pkt: NetPacket):
        """Run one packet through one pipeline; returns (emissions, events).

        Emissions are (source_pipeline, NetPacket) pairs handed to the fabric
        for routing; events are trace records (layer outputs, verdicts).
        """
        plan = self.plan
        if plan is None or pkt.layer_id != plan.ordinal:
            raise NotInstalledError(
                f"switch {self.switch_id} has no layer {pkt.layer_id} installed")
        if plan.kind == "conv1d":
            if pkt.kind != CONV_INPUT:
                raise MalformedPacketError(
                    f"conv layer got {pkt.kind} packet")
            validate_packet(pkt, plan.key_dims[2])
            return self._process_conv(pipeline, pkt)
        if pkt.kind not in (DENSE_INPUT, POOL_RESULT):
            raise MalformedPacketError(f"dense layer got {pkt.kind} packet")
        validate_packet(pkt)
        return self._process_dense(pipeline, pkt)

    def _process_conv(self, pipeline: int, pkt: NetPacket):
        plan = self.plan
        tally = self.tally
        table = self._tables[pipeline]
        payload = pkt.payload
        kernel = len(payload)
        position = pkt.position
        if not 0 <= position < plan.out_len:
            raise MalformedPacketError(f"conv position {position} out of range")
        flow = pkt.flow_id
        window = plan.pool_window
        shift = self._shift
        products = product_table() if self.backend == "tcam" else None
        completed = []

        for f in self._owned[pipeline]:
            keys = self._keys[pipeline][f]
            acc = self._biases[f]
            tally.adds += 1
            if products is not None:
                for t in range(kernel):
                    w = table[keys[t]]
                    acc += products[(payload[t] << 8) | (w & 0xFF)]
                tally.lookups += 2 * kernel
                tally.adds += kernel
            else:
                for t in range(kernel):
                    w = table[keys[t]]
                    acc += shift_add_mult(payload[t], w)
                    pc = _POPCOUNT8[-w if w < 0 else w]
                    tally.shifts += pc
                    tally.adds += (pc - 1 if pc > 0 else 0) + (1 if w < 0 else 0)
                tally.lookups += kernel
                tally.adds += kernel
            assert INT32_MIN <= acc <= INT32_MAX, "conv accumulator overflow"
            act = relu_msb(acc)
            tally.compares += 1
            act = requantize(act, shift)
            tally.shifts += 1

            if window:
                result = self._pool_record(
                    flow, pipeline, f, position // window, position % window,
                    act, window)
                if result is not None:
                    completed.append(
                        (self._stage_base[f] + position // window, result))
            else:
                completed.append((self._stage_base[f] + position, act))
                tally.registers += 1

        if completed:
            return self._stage_results(flow, pipeline, completed)
        return None, None

    def _pool_record(self, flow, pipeline, fil, window_id, pos, value, window):
        """Flag the arrival bit, store the value, and reduce when complete."""
        key = (flow, pipeline, fil, window_id)
        state = self._pool.get(key)
        if state is None:
            state = self._pool[key] = {}
        if pos in state:
            raise DuplicateArrivalError(
                f"duplicate pool arrival flow={flow} filter={fil} "
                f"window={window_id} pos={pos}")
        state[pos] = value
        tally = self.tally
        tally.registers += 2   # bitmap flag + value store
        tally.compares += 1    # completeness check
        if len(state) < window:
            return None
        best, depth = tree_max([state[i] for i in range(window)])
        assert depth == (math.ceil(math.log2(window)) if window > 1 else 0), \
            "pool reduction depth must be ceil(log2(window))"
        tally.compares += window - 1
        tally.registers += 2   # window state clear + staged write
        del self._pool[key]
        return best

    def _process_dense(self, pipeline: int, pkt: NetPacket):
        plan = self.plan
        tally = self.tally
        flow = pkt.flow_id
        ckey = (flow, pipeline)
        cursor = self._cursor.get(ckey, 0)
        tally.registers += 1   # cursor access
        if cursor >= plan.in_width:
            raise MalformedPacketError(
                f"dense flow {flow} already consumed {plan.in_width} features")
        if pkt.position != cursor:
            raise MalformedPacketError(
                f"dense packet out of order: position {pkt.position}, "
                f"cursor {cursor}")
        owned = self._owned[pipeline]
        accs = self._acc.get(ckey)
        if accs is None:
            accs = self._acc[ckey] = [self._biases[j] for j in owned]
            tally.adds += len(owned)  # bias preload
        value = pkt.value
        table = self._tables[pipeline]
        keys = self._keys[pipeline]
        if self.backend == "tcam":
            products = product_table()
            for n, j in enumerate(owned):
                w = table[keys[j][cursor]]
                accs[n] += products[(value << 8) | (w & 0xFF)]
                tally.lookups += 2
                tally.adds += 1
                tally.registers += 1
        else:
            for n, j in enumerate(owned):
                w = table[keys[j][cursor]]
                accs[n] += shift_add_mult(value, w)
                pc = _POPCOUNT8[-w if w < 0 else w]
                tally.lookups += 1
                tally.shifts += pc
                tally.adds += (pc - 1 if pc > 0 else 0) + (1 if w < 0 else 0) + 1
                tally.registers += 1
        cursor += 1
        self._cursor[ckey] = cursor
        if cursor < plan.in_width:
            return None, None

        # all features consumed: finalize every owned neuron
        completed = []
        for n, j in enumerate(owned):
            acc = accs[n]
            assert INT32_MIN <= acc <= INT32_MAX, "dense accumulator overflow"
            if plan.is_final:
                completed.append((j, acc))
                tally.registers += 1
            else:
                act = relu_msb(acc)
                tally.compares += 1
                act = requantize(act, self._shift)
                tally.shifts += 1
                completed.append((j, act))
                tally.registers += 1
        del self._acc[ckey]
        if completed:
            return self._stage_results(flow, pipeline, completed)
        # a pipeline owning zero neurons never stages; it only tracks the cursor
        return None, None

    # --- egress staging and the layer barrier ------------------------------------

    def _stage_results(self, flow, pipeline, results):
        staged = self._staged.get(flow)
        if staged is None:
            staged = self._staged[flow] = {}
        for pos, value in results:
            if pos in staged:
                raise DuplicateArrivalError(
                    f"result position {pos} staged twice for flow {flow}")
            staged[pos] = value
        ckey = (flow, pipeline)
        count = self._staged_count.get(ckey, 0) + len(results)
        self._staged_count[ckey] = count
        expected = self._expected[pipeline]
        if count > expected:
            raise DuplicateArrivalError(
                f"pipeline {pipeline} staged {count} results, expected "
                f"{expected}")
        if count < expected:
            return None, None
        done = self._pipes_done.get(flow, 0) + 1
        self._pipes_done[flow] = done
        if done < self._active_pipes:
            return None, None
        return self._emit_layer(flow, pipeline)

    def _emit_layer(self, flow, pipeline):
        """All pipelines finished: emit the layer's outputs in feature order."""
        plan = self.plan
        staged = self._staged.pop(flow)
        self._pipes_done.pop(flow, None)
        for pip in range(self.pipelines):
            self._staged_count.pop((flow, pip), None)
            self._cursor.pop((flow, pip), None)
        if len(staged) != plan.out_width:
            raise SwitchSimError(
                f"flow {flow}: staged {len(staged)} of {plan.out_width} values")
        values = [staged[i] for i in range(plan.out_width)]
        events = [("layer_output", flow, plan.ordinal, tuple(values))]

        if plan.is_final:
            best, best_class = values[0], 0
            for i in range(1, len(values)):
                if values[i] > best:
                    best, best_class = values[i], i
            self.tally.compares += len(values) - 1
            pkt = NetPacket(flow_id=flow, layer_id=plan.ordinal + 1,
                            kind=VERDICT, value=best_class)
            events.append(("verdict", flow, best_class, tuple(values)))
            return [(pipeline, pkt)], events

        value_kind = POOL_RESULT if plan.pool_window else DENSE_INPUT
        per_filter = plan.out_len // plan.pool_window if plan.pool_window else 0
        packets = build_packets_for_layer(
            plan.next_kind, plan.next_kernel, plan.next_stride,
            plan.ordinal + 1, values, flow,
            value_kind=value_kind, per_filter_out=per_filter)
        return [(pipeline, p) for p in packets], events
