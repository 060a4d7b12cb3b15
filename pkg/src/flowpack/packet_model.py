"""Byte-exact header codecs and the packet/header domain types.

All multi-byte integer fields are big-endian on the wire. Decoders never
read past the length implied by the header itself (14 bytes for Ethernet,
``hdr_len * 4`` for IPv4, ``data_offset * 4`` for TCP, 8 for UDP), so a
frame may carry arbitrary trailing payload without affecting the result.

Header values are immutable NamedTuples: cheap to build on a per-packet
hot path, hashable, and safe to share across threads. Every decoder is a
pure function over an immutable byte sequence.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806
ETHERTYPE_VLAN = 0x8100

IPPROTO_TCP = 6
IPPROTO_UDP = 17

ETH_HLEN = 14
IPV4_MIN_HLEN = 20
TCP_MIN_HLEN = 20
UDP_HLEN = 8

_ETH = struct.Struct(">6s6sH")
_IPV4 = struct.Struct(">BBHHHBBHII")
_TCP = struct.Struct(">HHIIHHHH")
_UDP = struct.Struct(">HHHH")

Buffer = Union[bytes, bytearray, memoryview]


class PacketError(Exception):
    """Base class for header codec failures."""


class TruncatedError(PacketError):
    """Input ends before the header it claims to carry."""


class MalformedError(PacketError):
    """A header field holds a value the codec refuses to interpret."""


class FlowPair(NamedTuple):
    """One (source IPv4, destination IPv4) pair; 8 bytes on the wire."""

    src_ip: int
    dst_ip: int

    def encode(self) -> bytes:
        return struct.pack(">II", self.src_ip, self.dst_ip)

    @classmethod
    def decode(cls, data: Buffer) -> "FlowPair":
        if len(data) < 8:
            raise TruncatedError("flow pair needs 8 bytes, got %d" % len(data))
        src, dst = struct.unpack_from(">II", data)
        return cls(src, dst)


@dataclass(frozen=True, slots=True)
class RawPacket:
    """Captured frame bytes plus capture metadata.

    ``orig_len`` is the length on the wire; a snap-length capture may hold
    fewer bytes in ``data`` but never more.
    """

    data: bytes
    timestamp: int = 0  # nanoseconds since epoch
    orig_len: int = -1  # defaults to len(data)

    def __post_init__(self) -> None:
        if self.orig_len < 0:
            object.__setattr__(self, "orig_len", len(self.data))
        elif self.orig_len < len(self.data):
            raise ValueError(
                "orig_len %d smaller than captured length %d"
                % (self.orig_len, len(self.data))
            )


class EthernetHeader(NamedTuple):
    dst_mac: bytes
    src_mac: bytes
    ethertype: int

    def encode(self) -> bytes:
        return _ETH.pack(self.dst_mac, self.src_mac, self.ethertype)


class Ipv4Header(NamedTuple):
    version: int
    hdr_len: int  # IHL, 32-bit words
    dscp_ecn: int
    total_length: int
    identification: int
    flags_fragment: int
    ttl: int
    protocol: int
    checksum: int  # carried, never validated
    src_ip: int
    dst_ip: int
    options: bytes = b""

    @property
    def header_length(self) -> int:
        """Header size in bytes, options included."""
        return self.hdr_len * 4

    def encode(self) -> bytes:
        fixed = _IPV4.pack(
            (self.version << 4) | self.hdr_len,
            self.dscp_ecn,
            self.total_length,
            self.identification,
            self.flags_fragment,
            self.ttl,
            self.protocol,
            self.checksum,
            self.src_ip,
            self.dst_ip,
        )
        return fixed + self.options if self.options else fixed


class TcpHeader(NamedTuple):
    src_port: int
    dst_port: int
    seq: int
    ack: int
    data_offset: int  # 32-bit words
    flags: int  # low 12 bits of the offset/flags word
    window: int
    checksum: int
    urgent: int
    options: bytes = b""

    @property
    def header_length(self) -> int:
        return self.data_offset * 4

    def encode(self) -> bytes:
        fixed = _TCP.pack(
            self.src_port,
            self.dst_port,
            self.seq,
            self.ack,
            (self.data_offset << 12) | self.flags,
            self.window,
            self.checksum,
            self.urgent,
        )
        return fixed + self.options if self.options else fixed


class UdpHeader(NamedTuple):
    src_port: int
    dst_port: int
    length: int
    checksum: int

    def encode(self) -> bytes:
        return _UDP.pack(self.src_port, self.dst_port, self.length, self.checksum)


class ParsedHeaders(NamedTuple):
    """Headers extracted from one frame.

    ``ip`` is present only for ethertype 0x0800 frames; ``l4`` is a
    TcpHeader or UdpHeader when the IPv4 protocol selected one, and None
    otherwise (non-TCP/UDP protocols, or no IP at all).
    """

    eth: EthernetHeader
    ip: Optional[Ipv4Header] = None
    l4: Union[TcpHeader, UdpHeader, None] = None
    header_bytes_consumed: int = ETH_HLEN


def decode_ethernet(data: Buffer, offset: int = 0) -> tuple[EthernetHeader, int]:
    """Decode the 14-byte Ethernet header at ``offset``; returns
    (header, bytes remaining after it)."""
    if len(data) - offset < ETH_HLEN:
        raise TruncatedError(
            "Ethernet header needs 14 bytes, got %d" % (len(data) - offset)
        )
    dst, src, ethertype = _ETH.unpack_from(data, offset)
    return EthernetHeader(dst, src, ethertype), len(data) - offset - ETH_HLEN


def decode_ipv4(data: Buffer, offset: int = 0) -> tuple[Ipv4Header, int]:
    """Decode an IPv4 header including options; returns (header, bytes remaining).

    Length is checked before any field: fewer than 20 bytes is Truncated
    even if byte 0 would also be malformed. ``hdr_len < 5`` and
    ``version != 4`` are rejected outright instead of being reinterpreted.
    """
    n = len(data) - offset
    if n < IPV4_MIN_HLEN:
        raise TruncatedError("IPv4 header needs 20 bytes, got %d" % n)
    (
        ver_ihl,
        dscp_ecn,
        total_length,
        identification,
        flags_fragment,
        ttl,
        protocol,
        checksum,
        src_ip,
        dst_ip,
    ) = _IPV4.unpack_from(data, offset)
    version = ver_ihl >> 4
    hdr_len = ver_ihl & 0x0F
    if version != 4:
        raise MalformedError("IP version %d, expected 4" % version)
    if hdr_len < 5:
        raise MalformedError("IPv4 IHL %d below minimum 5" % hdr_len)
    header_len = hdr_len * 4
    if n < header_len:
        raise TruncatedError("IPv4 header claims %d bytes, got %d" % (header_len, n))
    options = (
        bytes(data[offset + IPV4_MIN_HLEN : offset + header_len])
        if hdr_len > 5
        else b""
    )
    header = Ipv4Header(
        version,
        hdr_len,
        dscp_ecn,
        total_length,
        identification,
        flags_fragment,
        ttl,
        protocol,
        checksum,
        src_ip,
        dst_ip,
        options,
    )
    return header, n - header_len


def decode_tcp(data: Buffer, offset: int = 0) -> tuple[TcpHeader, int]:
    """Decode a TCP header including options; returns (header, bytes remaining)."""
    n = len(data) - offset
    if n < TCP_MIN_HLEN:
        raise TruncatedError("TCP header needs 20 bytes, got %d" % n)
    (
        src_port,
        dst_port,
        seq,
        ack,
        off_flags,
        window,
        checksum,
        urgent,
    ) = _TCP.unpack_from(data, offset)
    data_offset = off_flags >> 12
    if data_offset < 5:
        raise MalformedError("TCP data offset %d below minimum 5" % data_offset)
    header_len = data_offset * 4
    if n < header_len:
        raise TruncatedError("TCP header claims %d bytes, got %d" % (header_len, n))
    options = (
        bytes(data[offset + TCP_MIN_HLEN : offset + header_len])
        if data_offset > 5
        else b""
    )
    header = TcpHeader(
        src_port,
        dst_port,
        seq,
        ack,
        data_offset,
        off_flags & 0x0FFF,
        window,
        checksum,
        urgent,
        options,
    )
    return header, n - header_len


def decode_udp(data: Buffer, offset: int = 0) -> tuple[UdpHeader, int]:
    """Decode the fixed 8-byte UDP header; returns (header, bytes remaining)."""
    n = len(data) - offset
    if n < UDP_HLEN:
        raise TruncatedError("UDP header needs 8 bytes, got %d" % n)
    src_port, dst_port, length, checksum = _UDP.unpack_from(data, offset)
    return UdpHeader(src_port, dst_port, length, checksum), n - UDP_HLEN


def encode_headers(h: ParsedHeaders) -> bytes:
    """Serialize parsed headers back to wire bytes.

    Decoding the result reproduces ``h`` exactly, and the output length
    equals ``h.header_bytes_consumed``.
    """
    parts = [h.eth.encode()]
    if h.ip is not None:
        parts.append(h.ip.encode())
        if h.l4 is not None:
            parts.append(h.l4.encode())
    return b"".join(parts)


def ipv4_checksum(header_bytes: Buffer) -> int:
    """RFC 791 ones-complement checksum over header bytes (checksum field zeroed)."""
    if len(header_bytes) % 2:
        header_bytes = bytes(header_bytes) + b"\x00"
    total = 0
    for (word,) in struct.iter_unpack(">H", header_bytes):
        total += word
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF
