"""switchdnn: deterministic in-fabric integer DNN inference simulator."""

from .model import (
    Conv1D,
    Dense,
    MaxPool1D,
    QuantizedModel,
    canonical_model,
    parse_model,
    random_model,
    requantize,
    serialize_model,
)
from .reference import ClassScores, infer, layer_forward
from .mapper import (
    FabricDescriptor,
    MappingPlan,
    build_plan,
    estimate_resources,
    weight_index,
)
from .switchsim import (
    NetPacket,
    SwitchSim,
    is_power_of_two,
    relu_msb,
    shift_add_mult,
    tcam_product,
)
from .fabric import Fabric, MulticastJob, build_clos, route_multicast, run_until_quiescent
from .flows import FiveTuple, FlowRecord, FlowTable, TracePacket, build_input, parse_trace
from .runner import build_fabric, differential_check, run_inference

__version__ = "0.1.0"

__all__ = [
    "ClassScores", "Conv1D", "Dense", "Fabric", "FabricDescriptor",
    "FiveTuple", "FlowRecord", "FlowTable", "MappingPlan", "MaxPool1D",
    "MulticastJob", "NetPacket", "QuantizedModel", "SwitchSim", "TracePacket",
    "build_clos", "build_fabric", "build_input", "build_plan",
    "canonical_model", "differential_check", "estimate_resources", "infer",
    "is_power_of_two", "layer_forward", "parse_model", "parse_trace",
    "random_model", "relu_msb", "requantize", "route_multicast",
    "run_inference", "run_until_quiescent", "serialize_model", "shift_add_mult",
    "tcam_product", "weight_index",
]
