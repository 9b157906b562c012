"""JSON schemas for the documents the CLI writes; tests validate against these."""

_OPS = {
    "type": "object",
    "properties": {cat: {"type": "integer", "minimum": 0}
                   for cat in ("lookups", "adds", "compares", "shifts",
                               "registers")},
    "required": ["lookups", "adds", "compares", "shifts", "registers"],
    "additionalProperties": False,
}

PLAN_DOC_SCHEMA = {
    "type": "object",
    "required": ["format", "routing_mode", "fabric", "layers", "transitions",
                 "resources"],
    "properties": {
        "format": {"const": "switchdnn-plan-v1"},
        "routing_mode": {"enum": ["2-tier", "3-tier"]},
        "fabric": {
            "type": "object",
            "required": ["tiers", "switches_per_tier", "pipelines_per_switch"],
            "properties": {
                "tiers": {"type": "integer", "minimum": 1},
                "switches_per_tier": {"type": "integer", "minimum": 1},
                "pipelines_per_switch": {"type": "integer", "minimum": 1},
            },
        },
        "layers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["ordinal", "name", "kind", "switch", "key_scheme",
                             "partitions", "pool_window", "table_entries"],
                "properties": {
                    "ordinal": {"type": "integer", "minimum": 0},
                    "name": {"type": "string"},
                    "kind": {"enum": ["conv1d", "dense"]},
                    "switch": {"type": "integer", "minimum": 0},
                    "key_scheme": {"enum": ["hash", "linear"]},
                    "partitions": {"type": "array",
                                   "items": {"type": "array",
                                             "items": {"type": "integer"}}},
                    "pool_window": {"type": "integer", "minimum": 0},
                    "table_entries": {"type": "array",
                                      "items": {"type": "integer"}},
                },
            },
        },
        "transitions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "source_switch", "dest_switch",
                             "dest_layer", "mode"],
            },
        },
        "resources": {
            "type": "object",
            "required": ["backend", "convention", "product_table_note", "rows"],
            "properties": {
                "rows": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["layer", "packets", "packets_emitted",
                                     "ops", "ops_total", "ops_per_packet",
                                     "memory_bytes"],
                        "properties": {"ops": _OPS},
                    },
                },
                "reference_comparison": {"type": ["array", "null"]},
            },
        },
    },
}

RUN_REPORT_SCHEMA = {
    "type": "object",
    "required": ["format", "config", "flow_count", "flows", "inferences",
                 "accuracy", "per_layer", "hop_stats"],
    "properties": {
        "format": {"const": "switchdnn-run-v1"},
        "flow_count": {"type": "integer", "minimum": 0},
        "inferences": {"type": "integer", "minimum": 0},
        "accuracy": {"type": ["number", "null"]},
        "flows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["src_ip", "src_port", "dst_ip", "dst_port",
                             "proto", "flow_id", "packet_count", "min_iat_ns",
                             "max_iat_ns", "votes", "verdict", "label"],
                "properties": {
                    "votes": {"type": "array",
                              "items": {"type": "array",
                                        "items": {"type": "integer"}}},
                    "verdict": {"type": ["integer", "null"]},
                    "label": {"type": ["integer", "null"]},
                    "min_iat_ns": {"type": ["integer", "null"]},
                    "max_iat_ns": {"type": ["integer", "null"]},
                },
            },
        },
        "per_layer": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["layer", "packets", "ops", "ops_total"],
                "properties": {"ops": _OPS},
            },
        },
        "hop_stats": {
            "type": "object",
            "required": ["jobs", "replicas", "by_hops"],
        },
    },
}

VERIFY_REPORT_SCHEMA = {
    "type": "object",
    "required": ["format", "status", "inputs", "seed", "backends",
                 "routing_mode", "divergences"],
    "properties": {
        "format": {"const": "switchdnn-verify-v1"},
        "status": {"enum": ["pass", "fail"]},
        "inputs": {"type": "integer", "minimum": 0},
        "divergences": {"type": "array"},
        "warning": {"type": "string"},
    },
}
