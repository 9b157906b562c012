"""Feature-extractor front end: trace ingestion, flow tracking, input assembly,
and per-flow majority voting."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .model import CANONICAL_INPUT_WIDTH, QuantizedModel
from .switchsim import is_power_of_two

PREFIX_BYTES = 68
DEFAULT_MAX_INFERENCE_POINT = 1024
MALICIOUS_CLASS = 1


class TraceError(ValueError):
    """Base class for trace ingestion failures."""


class TraceFormatError(TraceError):
    """Malformed or truncated trace input."""


class TraceOrderError(TraceError):
    """Non-monotonic timestamps within a flow (strict mode only)."""


class VoteError(ValueError):
    """Duplicate or missing votes."""


class FeatureWidthError(ValueError):
    """Model input width does not match the front end's feature layout."""


@dataclass(frozen=True)
class FiveTuple:
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    proto: int

    def packed(self) -> bytes:
        return struct.pack(">IIHHB", self.src_ip, self.dst_ip,
                           self.src_port, self.dst_port, self.proto)


@dataclass(frozen=True)
class TracePacket:
    timestamp_ns: int
    tuple: FiveTuple
    raw_prefix: bytes          # at most 68 bytes; padded at input assembly
    label: int = None

    def __post_init__(self):
        if len(self.raw_prefix) > PREFIX_BYTES:
            raise TraceFormatError(
                f"raw prefix longer than {PREFIX_BYTES} bytes")


@dataclass
class FlowRecord:
    key: FiveTuple
    flow_id: int
    packet_count: int = 0
    last_arrival: int = 0
    min_iat: int = None
    max_iat: int = None
    votes: list = field(default_factory=list)   # (inference point, class)


def fnv1a_bytes(data: bytes) -> int:
    h = 0x811C9DC5
    for b in data:
        h ^= b
        h = (h * 0x01000193) & 0xFFFFFFFF
    return h


def flow_hash(key: FiveTuple) -> int:
    """Stable 32-bit flow identifier (never Python's builtin hash)."""
    return fnv1a_bytes(key.packed())


# --- trace parsing -----------------------------------------------------------

class ParsedTrace:
    """Sequence of TracePacket plus ingestion counters."""

    def __init__(self, packets, skipped_non_ipv4=0):
        self.packets = list(packets)
        self.skipped_non_ipv4 = skipped_non_ipv4

    def __iter__(self):
        return iter(self.packets)

    def __len__(self):
        return len(self.packets)

    def __getitem__(self, i):
        return self.packets[i]


def ip_to_int(text: str) -> int:
    parts = text.strip().split(".")
    if len(parts) != 4:
        raise TraceFormatError(f"bad IPv4 address {text!r}")
    value = 0
    for p in parts:
        try:
            octet = int(p)
        except ValueError:
            raise TraceFormatError(f"bad IPv4 address {text!r}") from None
        if not 0 <= octet <= 255:
            raise TraceFormatError(f"bad IPv4 address {text!r}")
        value = (value << 8) | octet
    return value


def int_to_ip(value: int) -> str:
    return ".".join(str((value >> s) & 0xFF) for s in (24, 16, 8, 0))


def _parse_text(data: str) -> ParsedTrace:
    packets = []
    for lineno, line in enumerate(data.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) not in (7, 8):
            raise TraceFormatError(
                f"line {lineno}: expected 7 or 8 comma-separated fields")
        try:
            ts = int(fields[0])
            src_port, dst_port, proto = int(fields[2]), int(fields[4]), int(fields[5])
            prefix = bytes.fromhex(fields[6]) if fields[6] else b""
        except ValueError as e:
            raise TraceFormatError(f"line {lineno}: {e}") from None
        key = FiveTuple(src_ip=ip_to_int(fields[1]), dst_ip=ip_to_int(fields[3]),
                        src_port=src_port, dst_port=dst_port, proto=proto)
        label = None
        if len(fields) == 8 and fields[7] != "":
            try:
                label = int(fields[7])
            except ValueError:
                raise TraceFormatError(f"line {lineno}: bad label") from None
        packets.append(TracePacket(timestamp_ns=ts, tuple=key,
                                   raw_prefix=prefix, label=label))
    return ParsedTrace(packets)


PCAP_MAGIC_BE = b"\xa1\xb2\xc3\xd4"
PCAP_MAGIC_LE = b"\xd4\xc3\xb2\xa1"
LINKTYPE_ETHERNET = 1
ETHERTYPE_IPV4 = 0x0800


def _parse_pcap(data: bytes) -> ParsedTrace:
    if len(data) < 24:
        raise TraceFormatError("truncated pcap global header")
    magic = data[:4]
    if magic == PCAP_MAGIC_BE:
        endian = ">"
    elif magic == PCAP_MAGIC_LE:
        endian = "<"
    else:
        raise TraceFormatError(f"unknown pcap magic {magic.hex()}")
    linktype = struct.unpack(endian + "I", data[20:24])[0]
    if linktype != LINKTYPE_ETHERNET:
        raise TraceFormatError(f"unsupported pcap link type {linktype}")

    packets = []
    skipped = 0
    offset = 24
    while offset < len(data):
        if offset + 16 > len(data):
            raise TraceFormatError("truncated pcap record header")
        ts_sec, ts_usec, incl_len, _orig = struct.unpack(
            endian + "IIII", data[offset:offset + 16])
        offset += 16
        if offset + incl_len > len(data):
            raise TraceFormatError("truncated pcap record data")
        frame = data[offset:offset + incl_len]
        offset += incl_len

        if len(frame) < 14 or frame[12:14] != struct.pack(">H", ETHERTYPE_IPV4):
            skipped += 1
            continue
        ip = frame[14:]
        if len(ip) < 20 or (ip[0] >> 4) != 4:
            skipped += 1
            continue
        ihl = (ip[0] & 0x0F) * 4
        if len(ip) < ihl:
            raise TraceFormatError("truncated IPv4 header")
        proto = ip[9]
        src_ip = struct.unpack(">I", ip[12:16])[0]
        dst_ip = struct.unpack(">I", ip[16:20])[0]
        src_port = dst_port = 0
        if proto in (6, 17) and len(ip) >= ihl + 4:
            src_port, dst_port = struct.unpack(">HH", ip[ihl:ihl + 4])
        key = FiveTuple(src_ip=src_ip, dst_ip=dst_ip, src_port=src_port,
                        dst_port=dst_port, proto=proto)
        packets.append(TracePacket(
            timestamp_ns=ts_sec * 1_000_000_000 + ts_usec * 1_000,
            tuple=key, raw_prefix=ip[:PREFIX_BYTES]))
    return ParsedTrace(packets, skipped_non_ipv4=skipped)


def parse_trace(source, format: str = "text") -> ParsedTrace:
    """Read a packet trace; ``format`` is "text" (csv lines) or "pcap"."""
    if hasattr(source, "read"):
        source = source.read()
    if format in ("text", "csv"):
        if isinstance(source, bytes):
            source = source.decode("utf-8")
        return _parse_text(source)
    if format == "pcap":
        if isinstance(source, str):
            source = source.encode("latin-1")
        return _parse_pcap(source)
    raise TraceFormatError(f"unknown trace format tag {format!r}")


# --- flow tracking -----------------------------------------------------------

class FlowTable:
    """Single-writer streaming flow state keyed by five-tuple."""

    def __init__(self, max_inference_point: int = DEFAULT_MAX_INFERENCE_POINT,
                 strict_timestamps: bool = True):
        self.max_inference_point = max_inference_point
        self.strict_timestamps = strict_timestamps
        self.records = {}

    def update(self, pkt: TracePacket):
        """Account one packet; returns (record, is_inference_point)."""
        record = self.records.get(pkt.tuple)
        if record is None:
            record = FlowRecord(key=pkt.tuple, flow_id=flow_hash(pkt.tuple))
            self.records[pkt.tuple] = record
        ts = pkt.timestamp_ns
        if record.packet_count > 0:
            if ts < record.last_arrival:
                if self.strict_timestamps:
                    raise TraceOrderError(
                        f"timestamp {ts} precedes {record.last_arrival} in flow "
                        f"{record.flow_id:#010x}")
                ts = record.last_arrival
            gap = ts - record.last_arrival
            if record.min_iat is None or gap < record.min_iat:
                record.min_iat = gap
            if record.max_iat is None or gap > record.max_iat:
                record.max_iat = gap
        record.last_arrival = ts
        record.packet_count += 1
        point = (record.packet_count <= self.max_inference_point
                 and is_power_of_two(record.packet_count))
        return record, point


def quantize_iat(iat_ns) -> int:
    """Log-scale 8-bit encoding; monotone in the gap and 0 for undefined."""
    if iat_ns is None or iat_ns <= 0:
        return 0
    return min(255, (iat_ns + 1).bit_length() - 1 << 3)


def fold_flow_id(flow_id: int) -> int:
    """XOR-fold the 32-bit flow id to 8 bits."""
    return ((flow_id >> 24) ^ (flow_id >> 16) ^ (flow_id >> 8) ^ flow_id) & 0xFF


def _byte_bits(value: int, out: list):
    for shift in (7, 6, 5, 4, 3, 2, 1, 0):   # MSB-first
        out.append((value >> shift) & 1)


def build_input(record: FlowRecord, pkt: TracePacket,
                model: QuantizedModel) -> tuple:
    """Assemble the model input: 544 prefix bits, 8+8 IAT bits, 8 flow-id bits.

    Every feature is a single bit; the prefix is zero-padded to 68 bytes and
    bit order within each byte is MSB-first.
    """
    if model.input_width != CANONICAL_INPUT_WIDTH:
        raise FeatureWidthError(
            f"model input width {model.input_width} != front-end layout "
            f"{CANONICAL_INPUT_WIDTH}")
    prefix = pkt.raw_prefix.ljust(PREFIX_BYTES, b"\x00")
    features = []
    for b in prefix:
        _byte_bits(b, features)
    _byte_bits(quantize_iat(record.min_iat), features)
    _byte_bits(quantize_iat(record.max_iat), features)
    _byte_bits(fold_flow_id(record.flow_id), features)
    assert len(features) == CANONICAL_INPUT_WIDTH
    return tuple(features)


# --- votes ---------------------------------------------------------------------

def record_vote(record: FlowRecord, point: int, cls: int):
    """Append one inference-point vote; duplicate points are errors."""
    if any(p == point for p, _ in record.votes):
        raise VoteError(f"duplicate vote for inference point {point}")
    record.votes.append((point, cls))


def verdict(record: FlowRecord, malicious_class: int = MALICIOUS_CLASS,
            first_n: int = None) -> int:
    """Plurality class over the recorded votes.

    Ties go to the designated malicious class when it participates in the
    tie, otherwise to the lowest tied class index.
    """
    votes = record.votes if first_n is None else record.votes[:first_n]
    if not votes:
        raise VoteError("no votes recorded")
    counts = {}
    for _, cls in votes:
        counts[cls] = counts.get(cls, 0) + 1
    top = max(counts.values())
    tied = sorted(c for c, n in counts.items() if n == top)
    if malicious_class in tied:
        return malicious_class
    return tied[0]
