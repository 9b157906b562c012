"""The shared vector file must match this package's input assembly exactly."""

import json
from pathlib import Path

from switchdnn_exporter.conformance import INPUT_WIDTH, features, generate_vectors

VECTORS = Path(__file__).resolve().parents[2] / "conformance" / "vectors.json"


def test_vector_file_matches_this_implementation():
    doc = json.loads(VECTORS.read_text())
    assert doc["format"] == "switchdnn-conformance-v1"
    assert doc["input_width"] == INPUT_WIDTH
    assert len(doc["vectors"]) >= 5
    for vec in doc["vectors"]:
        got = features(bytes.fromhex(vec["raw_prefix_hex"]),
                       vec["min_iat_ns"], vec["max_iat_ns"], vec["flow_id"])
        assert got == vec["features"], vec["name"]


def test_generator_is_deterministic():
    assert generate_vectors() == generate_vectors()
