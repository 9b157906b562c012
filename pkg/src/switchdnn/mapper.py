"""Compiles a quantized model onto a Clos fabric of programmable switches.

One weight-bearing layer per lowest-tier switch, filters/neurons round-robin
across that switch's pipelines, pools colocated with their conv layer, and
closed-form resource estimates under a documented operation-counting
convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Conv1D, Dense, MaxPool1D, QuantizedModel, model_geometry


class PlanError(ValueError):
    """Planning failure."""


class InsufficientSwitchesError(PlanError):
    """Fewer lowest-tier switches than weight-bearing layers."""


class ClosError(ValueError):
    """Fabric descriptor violates the Clos wiring contract."""


@dataclass(frozen=True)
class FabricDescriptor:
    """Multi-tier Clos: full bipartite links between adjacent tiers.

    The link between lower-tier switch a and upper-tier switch b attaches at
    pipeline (b mod P) of the lower switch and pipeline (a mod P) of the
    upper switch.  Switch ids are global: tier * switches_per_tier + index.
    """

    tiers: int
    switches_per_tier: int
    pipelines_per_switch: int

    def validate(self):
        if self.tiers < 1 or self.switches_per_tier < 1 \
                or self.pipelines_per_switch < 1:
            raise ClosError("tiers, switches, and pipelines must be positive")
        if self.tiers >= 2 and self.switches_per_tier < self.pipelines_per_switch:
            # Fewer upper-tier switches than pipelines would leave some
            # destination pipelines unreachable by distinct transit paths.
            raise ClosError(
                "multi-tier fabrics need switches_per_tier >= pipelines_per_switch")

    def switch_id(self, tier: int, index: int) -> int:
        return tier * self.switches_per_tier + index

    def tier_of(self, switch: int) -> int:
        return switch // self.switches_per_tier

    def index_of(self, switch: int) -> int:
        return switch % self.switches_per_tier

    def link_map(self) -> list:
        """All inter-tier links as (lower_switch, lower_pipe, upper_switch, upper_pipe)."""
        p = self.pipelines_per_switch
        links = []
        for t in range(self.tiers - 1):
            for a in range(self.switches_per_tier):
                for b in range(self.switches_per_tier):
                    links.append((self.switch_id(t, a), b % p,
                                  self.switch_id(t + 1, b), a % p))
        return links


@dataclass(frozen=True)
class LayerPlan:
    """Placement and install description of one weight-bearing layer."""

    ordinal: int        # position among weight-bearing layers
    model_index: int    # index in model.layers
    name: str           # Conv1, Dense2, ...
    kind: str           # "conv1d" | "dense"
    switch: int         # lowest-tier switch id
    partitions: tuple   # per pipeline: tuple of owned filter / neuron indices
    key_scheme: str     # "hash" | "linear"
    key_dims: tuple     # (F, H, W) index domain for weight keys
    pool_window: int    # 0 when no pool is colocated
    stride: int         # conv stride (0 for dense)
    in_width: int       # conv: input sequence length; dense: feature count
    out_len: int        # conv: positions per filter (0 for dense)
    out_width: int      # width of the vector this layer transmits
    is_final: bool
    next_kind: str      # "conv1d" | "dense" | "verdict"
    next_kernel: int
    next_stride: int


@dataclass(frozen=True)
class TransitionPlan:
    """One layer boundary: where values travel and how they are multicast."""

    index: int                  # 0 is the injection into the first layer
    source_switch: int          # -1 for the feature-extractor injection
    dest_switch: int
    dest_layer: int             # ordinal of the consuming layer
    mode: str                   # "2-tier" | "3-tier"


@dataclass(frozen=True)
class MappingPlan:
    fabric: FabricDescriptor
    routing_mode: str
    layers: tuple               # LayerPlan, ordinal order
    transitions: tuple          # TransitionPlan, index order

    def layer_assignments(self) -> dict:
        return {lp.ordinal: lp.switch for lp in self.layers}

    def colocated_pools(self) -> dict:
        return {lp.ordinal: lp.pool_window
                for lp in self.layers if lp.pool_window}


# --- weight table keys --------------------------------------------------------

FNV_OFFSET = 0x811C9DC5
FNV_PRIME = 0x01000193


def fnv1a_key(f: int, i: int, j: int) -> int:
    """32-bit FNV-1a over the little-endian packed (filter, i, j) triple."""
    h = FNV_OFFSET
    for v in (f, i, j):
        for shift in (0, 8, 16, 24):
            h ^= (v >> shift) & 0xFF
            h = (h * FNV_PRIME) & 0xFFFFFFFF
    return h


def _fnv1a_keys_bulk(fs, is_, js) -> np.ndarray:
    h = np.full(len(fs), FNV_OFFSET, dtype=np.uint64)
    prime = np.uint64(FNV_PRIME)
    mask = np.uint64(0xFFFFFFFF)
    for col in (np.asarray(fs, dtype=np.uint64),
                np.asarray(is_, dtype=np.uint64),
                np.asarray(js, dtype=np.uint64)):
        for shift in (0, 8, 16, 24):
            h ^= (col >> np.uint64(shift)) & np.uint64(0xFF)
            h = (h * prime) & mask
    return h


def linear_key(f: int, i: int, j: int, dims: tuple) -> int:
    """Dense fallback key: ((f*H)+i)*W + j."""
    _, height, width = dims
    return (f * height + i) * width + j


def weight_index(f: int, i: int, j: int, dims: tuple,
                 scheme: str = "hash") -> int:
    """Table key for one weight under the active keying scheme."""
    if scheme == "hash":
        return fnv1a_key(f, i, j)
    if scheme == "linear":
        return linear_key(f, i, j, dims)
    raise PlanError(f"unknown key scheme {scheme!r}")


def choose_key_scheme(dims: tuple, hash_fn=None) -> str:
    """Verify hash injectivity over the full index domain; fall back to linear."""
    filters, height, width = dims
    if hash_fn is None:
        grid = np.indices((filters, height, width)).reshape(3, -1)
        keys = _fnv1a_keys_bulk(grid[0], grid[1], grid[2])
        distinct = len(np.unique(keys))
    else:
        seen = set()
        for f in range(filters):
            for i in range(height):
                for j in range(width):
                    seen.add(hash_fn(f, i, j))
        distinct = len(seen)
    return "hash" if distinct == filters * height * width else "linear"


# --- planning -----------------------------------------------------------------

_NAME_PREFIX = {"conv1d": "Conv", "dense": "Dense"}


def layer_names(model: QuantizedModel) -> list:
    """Conv1, Conv2, Dense1, ... for the weight-bearing layers in order."""
    counts = {"conv1d": 0, "dense": 0}
    names = []
    for idx in model.weight_layers:
        kind = model.layers[idx].kind
        counts[kind] += 1
        names.append(f"{_NAME_PREFIX[kind]}{counts[kind]}")
    return names


def build_plan(model: QuantizedModel, fabric: FabricDescriptor,
               routing_mode: str = "2-tier") -> MappingPlan:
    """Assign one weight-bearing layer per lowest-tier switch, in model order."""
    fabric.validate()
    if routing_mode not in ("2-tier", "3-tier"):
        raise PlanError(f"unknown routing mode {routing_mode!r}")

    geoms = model_geometry(model)
    weight_indices = model.weight_layers
    if len(weight_indices) > fabric.switches_per_tier:
        raise InsufficientSwitchesError(
            f"model has {len(weight_indices)} weight-bearing layers but the "
            f"lowest tier has only {fabric.switches_per_tier} switches")
    if len(weight_indices) > 1:
        # single-layer models need only the local traffic manager
        if routing_mode == "2-tier" and fabric.tiers < 2:
            raise PlanError("2-tier routing requires at least two tiers")
        if routing_mode == "3-tier" and fabric.tiers < 3:
            raise PlanError("3-tier routing requires at least three tiers")

    p = fabric.pipelines_per_switch
    names = layer_names(model)
    layer_plans = []
    for ordinal, model_index in enumerate(weight_indices):
        layer = model.layers[model_index]
        geom = geoms[model_index]
        if isinstance(layer, Conv1D):
            count = layer.filters
            dims = (layer.filters, 1, layer.kernel_width)
            pool_window = 0
            stride = layer.stride
            out_len = geom.out_len
            out_width = geom.out_width
            if model_index + 1 < len(model.layers) and \
                    isinstance(model.layers[model_index + 1], MaxPool1D):
                pool_window = model.layers[model_index + 1].window
                out_width = geoms[model_index + 1].out_width
        else:
            count = layer.out_width
            dims = (layer.out_width, 1, layer.in_width)
            pool_window = 0
            stride = 0
            out_len = 0
            out_width = layer.out_width
        partitions = tuple(tuple(range(pip, count, p)) for pip in range(p))

        is_final = ordinal == len(weight_indices) - 1
        if is_final:
            next_kind, next_kernel, next_stride = "verdict", 0, 0
        else:
            nxt = model.layers[weight_indices[ordinal + 1]]
            if isinstance(nxt, Conv1D):
                next_kind, next_kernel, next_stride = \
                    "conv1d", nxt.kernel_width, nxt.stride
            else:
                next_kind, next_kernel, next_stride = "dense", 0, 0

        layer_plans.append(LayerPlan(
            ordinal=ordinal,
            model_index=model_index,
            name=names[ordinal],
            kind=layer.kind,
            switch=fabric.switch_id(0, ordinal),
            partitions=partitions,
            key_scheme=choose_key_scheme(dims),
            key_dims=dims,
            pool_window=pool_window,
            stride=stride,
            in_width=geom.in_width,
            out_len=out_len,
            out_width=out_width,
            is_final=is_final,
            next_kind=next_kind,
            next_kernel=next_kernel,
            next_stride=next_stride,
        ))

    transitions = [TransitionPlan(
        index=0, source_switch=-1, dest_switch=layer_plans[0].switch,
        dest_layer=0, mode=routing_mode)]
    for ordinal in range(len(layer_plans) - 1):
        transitions.append(TransitionPlan(
            index=ordinal + 1,
            source_switch=layer_plans[ordinal].switch,
            dest_switch=layer_plans[ordinal + 1].switch,
            dest_layer=ordinal + 1,
            mode=routing_mode,
        ))

    return MappingPlan(fabric=fabric, routing_mode=routing_mode,
                       layers=tuple(layer_plans), transitions=tuple(transitions))


def build_weight_tables(model: QuantizedModel, plan: MappingPlan) -> dict:
    """Materialize (ordinal, pipeline) -> {key: weight} match-action tables."""
    tables = {}
    for lp in plan.layers:
        layer = model.layers[lp.model_index]
        for pip, owned in enumerate(lp.partitions):
            table = {}
            for item in owned:
                row = layer.weights[item]
                for j, w in enumerate(row):
                    key = weight_index(item, 0, j, lp.key_dims, lp.key_scheme)
                    if key in table:
                        raise PlanError(f"duplicate weight key {key}")
                    table[key] = w
            tables[(lp.ordinal, pip)] = table
    return tables


# --- resource accounting --------------------------------------------------------

OP_CATEGORIES = ("lookups", "adds", "compares", "shifts", "registers")

RESOURCE_CONVENTION = (
    "one op per table lookup, add, compare, shift, or register access during "
    "ingress/egress packet processing; packets are logical multicast jobs "
    "entering the layer (replicas not counted); memory is weight bytes + "
    "4-byte biases + transient register state sized for one in-flight "
    "inference; ops_per_packet = total ops // packets"
)

PRODUCT_TABLE_NOTE = (
    "exact-match product table holds all 2^16 value|weight pairs; entries are "
    "signed 16-bit products (131072 bytes per pipeline), counted separately "
    "from per-layer memory"
)

# Counts reported for the original in-switch hardware deployment of the
# canonical architecture: (packets, operations per packet, memory bytes).
# Our desk-scale convention differs, so deltas are expected.
REFERENCE_DEPLOYMENT_COUNTS = {
    "Conv1": (3240, 644, 1296),
    "Conv2": (2592, 38895, 5680),
    "Dense1": (496, 3159, 25792),
    "Dense2": (4, 4950, 1250),
    "Dense3": (1, 378, 51),
}


def _popcount(v: int) -> int:
    return bin(v).count("1")


def _shiftadd_ops(weights_flat) -> tuple:
    """(shift_ops, add_ops) for one multiply pass over each weight."""
    shifts = 0
    adds = 0
    for w in weights_flat:
        pc = _popcount(-w if w < 0 else w)
        shifts += pc
        adds += (pc - 1 if pc > 0 else 0) + (1 if w < 0 else 0)
    return shifts, adds


@dataclass(frozen=True)
class LayerResources:
    name: str
    packets_generated: int
    packets_emitted: int
    ops: dict
    ops_total: int
    ops_per_packet: int
    memory_bytes: int


@dataclass(frozen=True)
class ResourceReport:
    backend: str
    convention: str
    product_table_note: str
    rows: tuple

    def row_map(self) -> dict:
        return {r.name: r for r in self.rows}


def _conv_resources(layer: Conv1D, lp: LayerPlan, p: int, backend: str) -> tuple:
    k = layer.kernel_width
    f = layer.filters
    length = lp.out_len
    w = lp.pool_window
    ops = dict.fromkeys(OP_CATEGORIES, 0)
    ops["adds"] = length * f * (k + 1)
    ops["compares"] = length * f
    ops["shifts"] = length * f
    if backend == "tcam":
        ops["lookups"] = length * f * 2 * k
    else:
        flat = [x for row in layer.weights for x in row]
        sa_shifts, sa_adds = _shiftadd_ops(flat)
        ops["lookups"] = length * f * k
        ops["shifts"] += length * sa_shifts
        ops["adds"] += length * sa_adds
    if w:
        completions = f * (length // w)
        ops["compares"] += length * f + completions * (w - 1)
        ops["registers"] = 2 * length * f + 2 * completions
        memory = (f * k + 4 * f
                  + f * (length + math.ceil(length / 8))
                  + f * (length // w))
    else:
        ops["registers"] = length * f
        memory = f * k + 4 * f + f * length
    return length, ops, memory


def _dense_resources(layer: Dense, lp: LayerPlan, p: int, class_count: int,
                     backend: str) -> tuple:
    n = layer.out_width
    i = layer.in_width
    ops = dict.fromkeys(OP_CATEGORIES, 0)
    ops["adds"] = i * n + n
    ops["registers"] = i * (p + n) + n
    if backend == "tcam":
        ops["lookups"] = 2 * i * n
    else:
        flat = [x for row in layer.weights for x in row]
        sa_shifts, sa_adds = _shiftadd_ops(flat)
        ops["lookups"] = i * n
        ops["shifts"] += sa_shifts
        ops["adds"] += sa_adds
    if lp.is_final:
        ops["compares"] += class_count - 1
        staged = 4 * n
    else:
        ops["compares"] += n
        ops["shifts"] += n
        staged = n
    memory = n * i + 4 * n + 4 * n + 4 * p + staged
    return i, ops, memory


def estimate_resources(model: QuantizedModel, plan: MappingPlan,
                       backend: str = "tcam") -> ResourceReport:
    """Closed-form per-layer packet/op/memory counts for one inference."""
    if backend not in ("tcam", "shift-add"):
        raise PlanError(f"unknown multiply backend {backend!r}")
    p = plan.fabric.pipelines_per_switch
    rows = []
    for lp in plan.layers:
        layer = model.layers[lp.model_index]
        if isinstance(layer, Conv1D):
            packets, ops, memory = _conv_resources(layer, lp, p, backend)
        else:
            packets, ops, memory = _dense_resources(
                layer, lp, p, model.class_count, backend)
        total = sum(ops.values())
        nxt = next((x for x in plan.layers if x.ordinal == lp.ordinal + 1), None)
        if nxt is None:
            emitted = 1  # the verdict
        elif nxt.kind == "conv1d":
            emitted = nxt.out_len
        else:
            emitted = nxt.in_width
        rows.append(LayerResources(
            name=lp.name,
            packets_generated=packets,
            packets_emitted=emitted,
            ops=ops,
            ops_total=total,
            ops_per_packet=total // packets,
            memory_bytes=memory,
        ))
    return ResourceReport(backend=backend, convention=RESOURCE_CONVENTION,
                          product_table_note=PRODUCT_TABLE_NOTE,
                          rows=tuple(rows))


def compare_reference(report: ResourceReport):
    """Side-by-side rows against the published hardware deployment counts.

    Returns None unless the report's row names match the canonical
    five-layer architecture exactly.
    """
    names = [r.name for r in report.rows]
    if names != list(REFERENCE_DEPLOYMENT_COUNTS):
        return None
    out = []
    for row in report.rows:
        ref_packets, ref_opp, ref_mem = REFERENCE_DEPLOYMENT_COUNTS[row.name]
        out.append({
            "layer": row.name,
            "packets": row.packets_generated,
            "packets_reference": ref_packets,
            "packets_delta": row.packets_generated - ref_packets,
            "ops_per_packet": row.ops_per_packet,
            "ops_per_packet_reference": ref_opp,
            "ops_per_packet_delta": row.ops_per_packet - ref_opp,
            "memory_bytes": row.memory_bytes,
            "memory_reference": ref_mem,
            "memory_delta": row.memory_bytes - ref_mem,
        })
    return out
