"""Emit labeled packet traces in the text format the simulator ingests."""

from __future__ import annotations

from dataclasses import dataclass

from .floatmodel import ExportError

PREFIX_BYTES = 68


@dataclass
class RawFlow:
    """One labeled flow: a 5-tuple plus timestamped payload prefixes."""

    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    proto: int
    packets: list            # (timestamp_ns, payload bytes)
    label: int = None


def _check_ip(text: str):
    parts = text.split(".")
    if len(parts) != 4 or any(not p.isdigit() or not 0 <= int(p) <= 255
                              for p in parts):
        raise ExportError(f"bad IPv4 address {text!r}")


def _check_flow(flow: RawFlow):
    _check_ip(flow.src_ip)
    _check_ip(flow.dst_ip)
    for port in (flow.src_port, flow.dst_port):
        if not 0 <= port <= 0xFFFF:
            raise ExportError(f"bad port {port}")
    if not 0 <= flow.proto <= 0xFF:
        raise ExportError(f"bad protocol {flow.proto}")
    last = None
    for ts, payload in flow.packets:
        if not isinstance(ts, int) or ts < 0:
            raise ExportError(f"bad timestamp {ts!r}")
        if last is not None and ts < last:
            raise ExportError("timestamps must be non-decreasing within a flow")
        if not isinstance(payload, (bytes, bytearray)):
            raise ExportError("payload must be bytes")
        last = ts


def emit_bit_input_dataset(flows) -> str:
    """Text trace: one line per packet, interleaved across flows by time.

    Each line is ``timestamp_ns,src_ip,src_port,dst_ip,dst_port,proto,
    hex_prefix[,label]``; payloads are truncated to 68 bytes (the simulator
    zero-pads shorter ones during input assembly).
    """
    rows = []
    for flow in flows:
        _check_flow(flow)
        for ts, payload in flow.packets:
            rows.append((ts, flow, bytes(payload[:PREFIX_BYTES])))
    rows.sort(key=lambda r: r[0])
    lines = []
    for ts, flow, prefix in rows:
        label = "" if flow.label is None else f",{flow.label}"
        lines.append(f"{ts},{flow.src_ip},{flow.src_port},{flow.dst_ip},"
                     f"{flow.dst_port},{flow.proto},{prefix.hex()}{label}")
    return "\n".join(lines) + ("\n" if lines else "")
