"""Stateful flow-pair aggregation into fixed-format summary packets.

A summary packet is an Ethernet frame with a custom ethertype whose
payload is a single count byte followed by ``count`` 8-byte flow pairs:

    bytes 0-5    destination MAC
    bytes 6-11   source MAC
    bytes 12-13  ethertype, big-endian
    byte  14     number of pairs (so pairs-per-summary is capped at 255)
    bytes 15-    pairs in arrival order, each src then dst, big-endian

A full summary therefore serializes to ``15 + 8 * n_p`` bytes. Also here:
the slot-displacement model that prices what emitting those summaries
costs on a saturated egress link.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from .packet_model import EthernetHeader, FlowPair, PacketError, TruncatedError

# Unassigned "local experimental" ethertype; Ethernet II framing requires
# values >= 0x0600, and this one cannot collide with real traffic.
DEFAULT_SUMMARY_ETHERTYPE = 0x88B5
DEFAULT_SUMMARY_MAC = b"\x00\x00\x00\x00\x00\x00"

SUMMARY_HEADER_LEN = 15  # Ethernet header plus the count byte
PAIR_LEN = 8


class WrongProtocolError(PacketError):
    """Frame does not carry the configured summary ethertype."""


@dataclass(frozen=True, slots=True)
class AggregatorConfig:
    n_p: int = 150  # pairs per full summary
    summary_ethertype: int = DEFAULT_SUMMARY_ETHERTYPE
    summary_dst_mac: bytes = DEFAULT_SUMMARY_MAC
    summary_src_mac: bytes = DEFAULT_SUMMARY_MAC

    def __post_init__(self) -> None:
        if not 1 <= self.n_p <= 255:
            raise ValueError("n_p must be in [1, 255], got %r" % (self.n_p,))
        if not 0 <= self.summary_ethertype <= 0xFFFF:
            raise ValueError("ethertype out of range: %r" % (self.summary_ethertype,))
        for mac in (self.summary_dst_mac, self.summary_src_mac):
            if len(mac) != 6:
                raise ValueError("MAC must be 6 bytes, got %r" % (mac,))


@dataclass(frozen=True, slots=True)
class SummaryPacket:
    eth: EthernetHeader
    pairs: tuple[FlowPair, ...]

    @property
    def count(self) -> int:
        return len(self.pairs)

    @property
    def wire_length(self) -> int:
        return SUMMARY_HEADER_LEN + PAIR_LEN * len(self.pairs)


class Aggregator:
    """Accumulates flow pairs and emits a summary every ``n_p`` pairs.

    Single-owner state: one thread pushes. Pairs are never reordered or
    dropped; concatenating the pairs of all emitted summaries plus the
    pending buffer reproduces the pushed sequence exactly.
    """

    def __init__(self, config: AggregatorConfig | None = None):
        self.config = config or AggregatorConfig()
        self._eth = EthernetHeader(
            self.config.summary_dst_mac,
            self.config.summary_src_mac,
            self.config.summary_ethertype,
        )
        self._pending: list[FlowPair] = []

    @property
    def pending(self) -> tuple[FlowPair, ...]:
        return tuple(self._pending)

    def push(self, pair: FlowPair) -> SummaryPacket | None:
        """Append one pair; returns a full summary exactly when the buffer fills."""
        pending = self._pending
        pending.append(pair)
        if len(pending) < self.config.n_p:
            return None
        summary = SummaryPacket(self._eth, tuple(pending))
        pending.clear()
        return summary

    def flush(self) -> SummaryPacket | None:
        """Emit the pending pairs as a short summary, or None if empty.

        Hardware streams forever; traces end. The count byte makes the
        short final summary self-describing, so no padding is needed.
        """
        if not self._pending:
            return None
        summary = SummaryPacket(self._eth, tuple(self._pending))
        self._pending.clear()
        return summary


def encode_summary(s: SummaryPacket) -> bytes:
    """Serialize a summary packet; output is exactly ``15 + 8 * count`` bytes."""
    count = len(s.pairs)
    flat = [v for pair in s.pairs for v in pair]
    return (
        struct.pack(">6s6sHB", s.eth.dst_mac, s.eth.src_mac, s.eth.ethertype, count)
        + struct.pack(">%dI" % (2 * count), *flat)
    )


def decode_summary(
    data: bytes | memoryview,
    summary_ethertype: int = DEFAULT_SUMMARY_ETHERTYPE,
) -> SummaryPacket:
    """Inverse of encode_summary. Trailing bytes beyond the count are ignored
    (an Ethernet link may pad short frames).
    """
    if len(data) < SUMMARY_HEADER_LEN:
        raise TruncatedError(
            "summary needs at least %d bytes, got %d" % (SUMMARY_HEADER_LEN, len(data))
        )
    dst, src, ethertype, count = struct.unpack_from(">6s6sHB", data)
    if ethertype != summary_ethertype:
        raise WrongProtocolError(
            "ethertype 0x%04x, expected 0x%04x" % (ethertype, summary_ethertype)
        )
    need = SUMMARY_HEADER_LEN + PAIR_LEN * count
    if len(data) < need:
        raise TruncatedError(
            "summary claims %d pairs (%d bytes), got %d" % (count, need, len(data))
        )
    words = struct.unpack_from(">%dI" % (2 * count), data, SUMMARY_HEADER_LEN)
    pairs = tuple(FlowPair(words[i], words[i + 1]) for i in range(0, 2 * count, 2))
    return SummaryPacket(EthernetHeader(dst, src, ethertype), pairs)


def iter_summaries(
    data: bytes,
    summary_ethertype: int = DEFAULT_SUMMARY_ETHERTYPE,
) -> Iterator[SummaryPacket]:
    """Decode back-to-back summaries from a concatenated byte stream.

    The count byte makes each summary self-delimiting, so a plain
    concatenation (as written by the pipeline's summary log) is enough.
    """
    offset = 0
    view = memoryview(data)
    while offset < len(data):
        if len(data) - offset < SUMMARY_HEADER_LEN:
            raise TruncatedError("trailing %d bytes at offset %d" % (len(data) - offset, offset))
        count = data[offset + 14]
        end = offset + SUMMARY_HEADER_LEN + PAIR_LEN * count
        yield decode_summary(view[offset:end], summary_ethertype)
        offset = end


def theoretical_drop_rate(n_p: int) -> Fraction:
    """Drop rate a summary-per-``n_p``-pairs scheme costs on a saturated link.

    Exactly ``1 / (n_p + 1)``; strictly decreasing in ``n_p``.
    """
    if n_p < 1:
        raise ValueError("n_p must be >= 1, got %r" % (n_p,))
    return Fraction(1, n_p + 1)


@dataclass(frozen=True, slots=True)
class SlotModelResult:
    forwarded: int  # real packets that kept their egress slot
    displaced: int  # real packets displaced by emitted summaries

    @property
    def n_pairs(self) -> int:
        return self.forwarded + self.displaced

    @property
    def displaced_fraction(self) -> Fraction:
        """``displaced / (n_pairs + displaced)``; equals the theoretical
        drop rate whenever the pair count is a multiple of ``n_p``."""
        offered = self.n_pairs + self.displaced
        if offered == 0:
            return Fraction(0)
        return Fraction(self.displaced, offered)


def simulate_slot_model(n_pairs: int, n_p: int) -> SlotModelResult:
    """Deterministic slot model of a saturated egress link.

    Every emitted summary occupies one packet slot and displaces one real
    packet, so ``displaced == floor(n_pairs / n_p)`` and the displaced
    fraction converges to ``1 / (n_p + 1)`` as the pair count grows.
    """
    if n_p < 1:
        raise ValueError("n_p must be >= 1, got %r" % (n_p,))
    if n_pairs < 0:
        raise ValueError("n_pairs must be >= 0, got %r" % (n_pairs,))
    displaced = n_pairs // n_p
    return SlotModelResult(forwarded=n_pairs - displaced, displaced=displaced)
