"""Independent input-assembly implementation and the shared conformance vectors.

This module deliberately re-implements the documented 568-feature layout
(544 prefix bits MSB-first, 8+8 log-quantized IAT bits, 8 folded flow-id
bits) without importing the simulator; the shared vector file pins both
implementations to the same bytes.
"""

from __future__ import annotations

import argparse
import json

INPUT_WIDTH = 68 * 8 + 16 + 8
PREFIX_BYTES = 68


def quantize_iat(iat_ns) -> int:
    if iat_ns is None or iat_ns <= 0:
        return 0
    log2 = (iat_ns + 1).bit_length() - 1
    return min(255, log2 * 8)


def fold_flow_id(flow_id: int) -> int:
    return ((flow_id >> 24) ^ (flow_id >> 16) ^ (flow_id >> 8) ^ flow_id) & 0xFF


def features(raw_prefix: bytes, min_iat_ns, max_iat_ns, flow_id: int) -> list:
    if len(raw_prefix) > PREFIX_BYTES:
        raise ValueError("prefix longer than 68 bytes")
    padded = raw_prefix.ljust(PREFIX_BYTES, b"\x00")
    bits = []
    for byte in padded:
        for shift in range(7, -1, -1):
            bits.append((byte >> shift) & 1)
    for value in (quantize_iat(min_iat_ns), quantize_iat(max_iat_ns),
                  fold_flow_id(flow_id)):
        for shift in range(7, -1, -1):
            bits.append((value >> shift) & 1)
    assert len(bits) == INPUT_WIDTH
    return bits


_CASES = [
    {"name": "all-zero", "prefix": b"", "min_iat": None, "max_iat": None,
     "flow_id": 0},
    {"name": "msb-first-byte", "prefix": b"\x80", "min_iat": None,
     "max_iat": None, "flow_id": 0},
    {"name": "ramp-prefix", "prefix": bytes(range(PREFIX_BYTES)),
     "min_iat": 1, "max_iat": 999_999, "flow_id": 0x11223344},
    {"name": "short-prefix-padded", "prefix": b"\xab" * 40, "min_iat": 0,
     "max_iat": 0, "flow_id": 0xFFFFFFFF},
    {"name": "saturated-iat", "prefix": b"\xff" * PREFIX_BYTES,
     "min_iat": 1023, "max_iat": 10 ** 12, "flow_id": 0xDEADBEEF},
    {"name": "tiny-gaps", "prefix": b"\x01", "min_iat": 7, "max_iat": 7,
     "flow_id": 1},
    {"name": "one-second-gap", "prefix": b"\x00\xff" * 34, "min_iat": 1_000,
     "max_iat": 1_000_000_000, "flow_id": 0x0BADF00D},
]


def generate_vectors() -> dict:
    vectors = []
    for case in _CASES:
        vectors.append({
            "name": case["name"],
            "raw_prefix_hex": case["prefix"].hex(),
            "min_iat_ns": case["min_iat"],
            "max_iat_ns": case["max_iat"],
            "flow_id": case["flow_id"],
            "features": features(case["prefix"], case["min_iat"],
                                 case["max_iat"], case["flow_id"]),
        })
    return {"format": "switchdnn-conformance-v1", "input_width": INPUT_WIDTH,
            "vectors": vectors}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="write the shared input-assembly conformance vectors")
    parser.add_argument("--output", required=True)
    args = parser.parse_args(argv)
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(generate_vectors(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
