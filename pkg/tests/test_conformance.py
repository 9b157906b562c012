"""Cross-component boundary: build_input must match the shared vectors
byte-for-byte (the exporter generates and checks the same file)."""

import json
from pathlib import Path

from switchdnn.flows import FiveTuple, FlowRecord, TracePacket, build_input
from switchdnn.model import CANONICAL_INPUT_WIDTH, random_model

VECTORS = Path(__file__).resolve().parents[1] / "conformance" / "vectors.json"


def test_build_input_matches_conformance_vectors():
    doc = json.loads(VECTORS.read_text())
    assert doc["input_width"] == CANONICAL_INPUT_WIDTH
    model = random_model(0, [CANONICAL_INPUT_WIDTH, ("dense", 2)])
    key = FiveTuple(src_ip=0, dst_ip=0, src_port=0, dst_port=0, proto=0)
    for vec in doc["vectors"]:
        record = FlowRecord(key=key, flow_id=vec["flow_id"],
                            min_iat=vec["min_iat_ns"],
                            max_iat=vec["max_iat_ns"])
        pkt = TracePacket(timestamp_ns=0, tuple=key,
                          raw_prefix=bytes.fromhex(vec["raw_prefix_hex"]))
        got = build_input(record, pkt, model)
        assert list(got) == vec["features"], vec["name"]
