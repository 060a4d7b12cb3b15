"""Capture-file handling and packet replay.

Reads and writes classic pcap (24-byte global header, 16-byte record
headers) in both byte orders and both timestamp resolutions (magic
0xa1b2c3d4 for microseconds, 0xa1b23c4d for nanoseconds). Header-only
captures are zero-padded back to their wire length before replay, since
the parse graph never looks past the headers anyway.

Replay delivers frames either to an in-process sink callable or over a
loopback UDP socket. The datagram mode wraps each frame in a UDP payload
rather than injecting raw L2 (no privileges needed; the receiver parses
the inner frame bytes identically).
"""

from __future__ import annotations

import socket
import struct
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Callable, Iterator, NamedTuple, Union

from .packet_model import ETHERTYPE_IPV4, RawPacket, ipv4_checksum

PCAP_MAGIC_MICRO = 0xA1B2C3D4
PCAP_MAGIC_NANO = 0xA1B23C4D
PCAP_VERSION = (2, 4)
LINKTYPE_ETHERNET = 1

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

MIN_TCP_FRAME = 54  # 14 Ethernet + 20 IPv4 + 20 TCP

DEFAULT_DATAGRAM_ADDR = "127.0.0.1"
DEFAULT_DATAGRAM_PORT = 9184

_HOST_PREFIX = "<" if sys.byteorder == "little" else ">"
_SWAPPED_PREFIX = ">" if sys.byteorder == "little" else "<"


class CaptureError(Exception):
    """Base class for capture-file failures."""


class BadMagicError(CaptureError):
    """File does not start with a recognized pcap magic."""


class TruncatedRecordError(CaptureError):
    """A record header or its payload ends early."""

    def __init__(self, message: str, *, record_index: int, offset: int):
        super().__init__("%s (record %d, byte offset %d)" % (message, record_index, offset))
        self.record_index = record_index
        self.offset = offset


class CaptureRecord(NamedTuple):
    ts_sec: int
    ts_frac: int  # microseconds or nanoseconds, per the file magic
    incl_len: int
    orig_len: int
    data: bytes


@dataclass
class CaptureFile:
    """In-memory capture: global-header fields plus the record list."""

    byte_order: str = "native"  # "native" or "swapped" relative to this host
    nanosecond: bool = False
    snaplen: int = 65535
    link_type: int = LINKTYPE_ETHERNET
    records: list[CaptureRecord] = field(default_factory=list)

    def iter_packets(self, pad: bool = True) -> Iterator[RawPacket]:
        for rec in self.records:
            if pad:
                yield pad_packet(rec, nanosecond=self.nanosecond)
            else:
                yield RawPacket(rec.data, _timestamp_ns(rec, self.nanosecond), rec.orig_len)


def _struct_prefix(byte_order: str) -> str:
    if byte_order == "native":
        return _HOST_PREFIX
    if byte_order == "swapped":
        return _SWAPPED_PREFIX
    raise ValueError("byte_order must be 'native' or 'swapped', got %r" % (byte_order,))


def _timestamp_ns(rec: CaptureRecord, nanosecond: bool) -> int:
    frac_ns = rec.ts_frac if nanosecond else rec.ts_frac * 1000
    return rec.ts_sec * 1_000_000_000 + frac_ns


def read_capture(source: Union[str, Path, bytes, BinaryIO]) -> CaptureFile:
    """Parse a classic pcap from a path, bytes, or binary file object.

    Either byte order and either timestamp magic is accepted. A record
    whose ``orig_len`` claims less than its captured length is normalized
    upward (some writers in the wild emit that), so the usual
    ``incl_len <= orig_len`` invariant holds after reading.
    """
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()

    if len(data) < GLOBAL_HEADER_LEN:
        raise BadMagicError("file too short for a pcap global header (%d bytes)" % len(data))

    prefix = None
    nanosecond = False
    for candidate in ("<", ">"):
        (magic,) = struct.unpack_from(candidate + "I", data)
        if magic in (PCAP_MAGIC_MICRO, PCAP_MAGIC_NANO):
            prefix = candidate
            nanosecond = magic == PCAP_MAGIC_NANO
            break
    if prefix is None:
        raise BadMagicError("unrecognized magic %s" % data[:4].hex())

    _, _, _, _, snaplen, link_type = struct.unpack_from(prefix + "HHiIII", data, 4)
    byte_order = "native" if prefix == _HOST_PREFIX else "swapped"

    records: list[CaptureRecord] = []
    offset = GLOBAL_HEADER_LEN
    rec_header = struct.Struct(prefix + "IIII")
    index = 0
    total = len(data)
    while offset < total:
        if total - offset < RECORD_HEADER_LEN:
            raise TruncatedRecordError(
                "record header needs 16 bytes, %d left" % (total - offset),
                record_index=index,
                offset=offset,
            )
        ts_sec, ts_frac, incl_len, orig_len = rec_header.unpack_from(data, offset)
        offset += RECORD_HEADER_LEN
        if total - offset < incl_len:
            raise TruncatedRecordError(
                "record payload needs %d bytes, %d left" % (incl_len, total - offset),
                record_index=index,
                offset=offset,
            )
        payload = data[offset : offset + incl_len]
        offset += incl_len
        records.append(
            CaptureRecord(ts_sec, ts_frac, incl_len, max(orig_len, incl_len), payload)
        )
        index += 1

    return CaptureFile(byte_order, nanosecond, snaplen, link_type, records)


def write_capture(cap: CaptureFile, sink: Union[str, Path, BinaryIO]) -> int:
    """Serialize a capture; returns bytes written.

    Records must satisfy ``len(data) == incl_len <= min(orig_len, snaplen)``.
    """
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as fh:
            return write_capture(cap, fh)

    prefix = _struct_prefix(cap.byte_order)
    magic = PCAP_MAGIC_NANO if cap.nanosecond else PCAP_MAGIC_MICRO
    header = struct.pack(
        prefix + "IHHiIII",
        magic,
        PCAP_VERSION[0],
        PCAP_VERSION[1],
        0,
        0,
        cap.snaplen,
        cap.link_type,
    )
    sink.write(header)
    written = len(header)
    rec_header = struct.Struct(prefix + "IIII")
    for i, rec in enumerate(cap.records):
        if len(rec.data) != rec.incl_len:
            raise ValueError("record %d: incl_len %d != data length %d" % (i, rec.incl_len, len(rec.data)))
        if rec.incl_len > rec.orig_len:
            raise ValueError("record %d: incl_len %d exceeds orig_len %d" % (i, rec.incl_len, rec.orig_len))
        if rec.incl_len > cap.snaplen:
            raise ValueError("record %d: incl_len %d exceeds snaplen %d" % (i, rec.incl_len, cap.snaplen))
        sink.write(rec_header.pack(rec.ts_sec, rec.ts_frac, rec.incl_len, rec.orig_len))
        sink.write(rec.data)
        written += RECORD_HEADER_LEN + rec.incl_len
    return written


def pad_bytes(rec: CaptureRecord) -> bytes:
    """Frame bytes restored to wire length by appending zeros."""
    if rec.incl_len == rec.orig_len:
        return rec.data
    return rec.data + b"\x00" * (rec.orig_len - rec.incl_len)


def pad_packet(rec: CaptureRecord, nanosecond: bool = False) -> RawPacket:
    """Zero-pad a snap-length record back to its original wire length.

    Captured bytes are never altered, only extended; the result's length
    equals ``orig_len`` exactly. Timestamps are normalized to nanoseconds.
    """
    return RawPacket(pad_bytes(rec), _timestamp_ns(rec, nanosecond), rec.orig_len)


def _tcp_frame(
    src_ip: int, dst_ip: int, src_port: int, dst_port: int, size: int
) -> bytes:
    eth = struct.pack(
        ">6s6sH", b"\x02\x00\x00\x00\x00\x02", b"\x02\x00\x00\x00\x00\x01", ETHERTYPE_IPV4
    )
    ip_no_cksum = struct.pack(
        ">BBHHHBBHII",
        0x45,  # version 4, IHL 5
        0,
        size - 14,  # total_length covers IP header through payload
        0,
        0x4000,  # don't-fragment
        64,
        6,
        0,
        src_ip,
        dst_ip,
    )
    cksum = ipv4_checksum(ip_no_cksum)
    ip = ip_no_cksum[:10] + struct.pack(">H", cksum) + ip_no_cksum[12:]
    tcp = struct.pack(
        ">HHIIHHHH", src_port, dst_port, 0, 0, (5 << 12) | 0x010, 65535, 0, 0
    )
    return eth + ip + tcp + b"\x00" * (size - MIN_TCP_FRAME)


def synthesize_uniform(count: int, packet_size: int, flows: int = 4) -> CaptureFile:
    """Generate ``count`` fixed-size TCP/IPv4 frames cycling round-robin
    through ``flows`` distinct (src, dst) address pairs.

    Frames of one flow share a single buffer, so a million-record capture
    stays cheap. Timestamps advance one microsecond per packet.
    """
    if packet_size < MIN_TCP_FRAME:
        raise ValueError(
            "packet_size %d cannot fit Ethernet+IPv4+TCP headers (%d bytes)"
            % (packet_size, MIN_TCP_FRAME)
        )
    if flows < 1:
        raise ValueError("flows must be >= 1, got %r" % (flows,))
    if count < 0:
        raise ValueError("count must be >= 0, got %r" % (count,))

    frames = [
        _tcp_frame(
            0x0A000000 + (i & 0xFFFFFF),  # 10.0.0.0/8 sources
            0x0AC00000 + (i & 0x3FFFFF),  # 10.192.0.0/10 destinations
            1024 + (i % 60000),
            80,
            packet_size,
        )
        for i in range(flows)
    ]
    records = [
        CaptureRecord(i // 1_000_000, i % 1_000_000, packet_size, packet_size, frames[i % flows])
        for i in range(count)
    ]
    return CaptureFile(records=records)


@dataclass
class ReplayConfig:
    mode: str = "in_process"  # "in_process" or "datagram_socket"
    target_pps: float | None = None  # None: as fast as possible
    loop_count: int = 1
    pad: bool = True
    address: str = DEFAULT_DATAGRAM_ADDR
    port: int = DEFAULT_DATAGRAM_PORT

    def __post_init__(self) -> None:
        if self.mode not in ("in_process", "datagram_socket"):
            raise ValueError("mode must be 'in_process' or 'datagram_socket', got %r" % (self.mode,))
        if self.loop_count < 1:
            raise ValueError("loop_count must be >= 1, got %r" % (self.loop_count,))
        if self.target_pps is not None and self.target_pps <= 0:
            raise ValueError("target_pps must be positive, got %r" % (self.target_pps,))


@dataclass(frozen=True, slots=True)
class ReplayStats:
    packets_sent: int
    bytes_sent: int
    elapsed: float
    achieved_pps: float
    send_failures: int = 0


class TokenBucket:
    """Blocking token bucket used to pace sends toward a target rate.

    The burst capacity defaults to 10 ms worth of tokens, which bounds
    the post-stall catch-up burst and keeps the achieved long-run rate
    within a few percent of the target.
    """

    def __init__(self, rate: float, burst: float | None = None):
        if rate <= 0:
            raise ValueError("rate must be positive, got %r" % (rate,))
        self.rate = float(rate)
        self.capacity = burst if burst is not None else max(1.0, rate / 100.0)
        self.tokens = self.capacity
        self._stamp = time.perf_counter()

    def take(self, n: float = 1.0) -> None:
        while True:
            now = time.perf_counter()
            self.tokens = min(self.capacity, self.tokens + (now - self._stamp) * self.rate)
            self._stamp = now
            if self.tokens >= n:
                self.tokens -= n
                return
            time.sleep(min(0.01, (n - self.tokens) / self.rate))


def replay(
    cap: CaptureFile,
    cfg: ReplayConfig,
    sink: Callable[[RawPacket], None] | None = None,
) -> ReplayStats:
    """Deliver every record (padded if configured) to the sink in order,
    ``loop_count`` times.

    In ``in_process`` mode the sink callable receives each packet and the
    channel is lossless. In ``datagram_socket`` mode frames are sent as
    UDP payloads to ``cfg.address:cfg.port``; send failures are counted,
    never fatal. Packets are materialized once and the same buffers are
    reused across loops.
    """
    if cfg.mode == "in_process" and sink is None:
        raise ValueError("in_process replay requires a sink")

    if cfg.pad:
        packets = [pad_packet(rec, nanosecond=cap.nanosecond) for rec in cap.records]
    else:
        packets = [
            RawPacket(rec.data, _timestamp_ns(rec, cap.nanosecond), rec.orig_len)
            for rec in cap.records
        ]

    bucket = TokenBucket(cfg.target_pps) if cfg.target_pps else None
    sent = 0
    nbytes = 0
    failures = 0
    sock = None
    if cfg.mode == "datagram_socket":
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        addr = (cfg.address, cfg.port)

    start = time.perf_counter()
    try:
        for _ in range(cfg.loop_count):
            if sock is not None:
                sendto = sock.sendto
                for pkt in packets:
                    if bucket is not None:
                        bucket.take()
                    try:
                        sendto(pkt.data, addr)
                    except OSError:
                        failures += 1
                        continue
                    sent += 1
                    nbytes += len(pkt.data)
            else:
                for pkt in packets:
                    if bucket is not None:
                        bucket.take()
                    sink(pkt)
                    sent += 1
                    nbytes += len(pkt.data)
    finally:
        if sock is not None:
            sock.close()
    elapsed = max(time.perf_counter() - start, 1e-9)
    return ReplayStats(sent, nbytes, elapsed, sent / elapsed, failures)
