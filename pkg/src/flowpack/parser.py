"""Fixed parse graph for flow-pair extraction.

The state machine is: start -> ethernet -> (ipv4 -> (tcp | udp | accept)
| accept). Source and destination addresses are extracted at the IPv4
stage, so a frame whose L4 protocol is neither TCP nor UDP still yields a
flow pair; only a decode error suppresses extraction.

Classification precedence is fixed so that independent implementations
can agree bit-for-bit: a layer's minimum length is checked before any of
its fields (shorter input is Truncated even if a field would also be
bad), then field validity (Malformed), then the full claimed length
(Truncated). Errors are recorded in the outcome, never raised.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

from .packet_model import (
    ETHERTYPE_IPV4,
    IPPROTO_TCP,
    IPPROTO_UDP,
    FlowPair,
    MalformedError,
    ParsedHeaders,
    RawPacket,
    TcpHeader,
    TruncatedError,
    UdpHeader,
    decode_ethernet,
    decode_ipv4,
    decode_tcp,
    decode_udp,
)


class ParseError(enum.Enum):
    TRUNCATED = "truncated"
    MALFORMED = "malformed"


class Verdict(enum.Enum):
    EXTRACTED_PAIR = "extracted_pair"
    ACCEPTED_NO_PAIR = "accepted_no_pair"


class ParseOutcome(NamedTuple):
    """Result of parsing one frame.

    ``pair`` is set iff the frame carried a decodable IPv4 header and no
    stage errored; ``headers`` holds whatever decoded before the error
    (None when even Ethernet failed).
    """

    headers: Optional[ParsedHeaders]
    pair: Optional[FlowPair]
    error: Optional[ParseError] = None

    @property
    def verdict(self) -> Verdict:
        return Verdict.EXTRACTED_PAIR if self.pair is not None else Verdict.ACCEPTED_NO_PAIR


@dataclass(slots=True)
class ParseStats:
    """Counters partitioning a parsed stream.

    ``tcp + udp + other_l4 == ipv4`` and ``ipv4 + non_ip + errored ==
    total``; ``ipv4`` counts frames that produced a flow pair.
    """

    total: int = 0
    ipv4: int = 0
    tcp: int = 0
    udp: int = 0
    other_l4: int = 0
    non_ip: int = 0
    errored: int = 0

    def add(self, outcome: ParseOutcome) -> None:
        self.total += 1
        if outcome.error is not None:
            self.errored += 1
        elif outcome.pair is not None:
            self.ipv4 += 1
            l4 = outcome.headers.l4
            if type(l4) is TcpHeader:
                self.tcp += 1
            elif type(l4) is UdpHeader:
                self.udp += 1
            else:
                self.other_l4 += 1
        else:
            self.non_ip += 1

    def merge(self, other: "ParseStats") -> None:
        """Field-wise addition, for combining per-shard stats."""
        self.total += other.total
        self.ipv4 += other.ipv4
        self.tcp += other.tcp
        self.udp += other.udp
        self.other_l4 += other.other_l4
        self.non_ip += other.non_ip
        self.errored += other.errored

    def as_dict(self) -> dict[str, int]:
        return {
            "total": self.total,
            "ipv4": self.ipv4,
            "tcp": self.tcp,
            "udp": self.udp,
            "other_l4": self.other_l4,
            "non_ip": self.non_ip,
            "errored": self.errored,
        }


def parse(pkt: RawPacket | bytes) -> ParseOutcome:
    """Run one frame through the parse graph. Pure; never raises."""
    data = pkt.data if type(pkt) is RawPacket else pkt
    try:
        eth, _ = decode_ethernet(data)
    except TruncatedError:
        return ParseOutcome(None, None, ParseError.TRUNCATED)

    if eth.ethertype != ETHERTYPE_IPV4:
        return ParseOutcome(ParsedHeaders(eth), None, None)

    try:
        ip, _ = decode_ipv4(data, 14)
    except TruncatedError:
        return ParseOutcome(ParsedHeaders(eth), None, ParseError.TRUNCATED)
    except MalformedError:
        return ParseOutcome(ParsedHeaders(eth), None, ParseError.MALFORMED)

    consumed = 14 + ip.hdr_len * 4
    protocol = ip.protocol
    l4: TcpHeader | UdpHeader | None = None
    if protocol == IPPROTO_TCP:
        try:
            l4, _ = decode_tcp(data, consumed)
        except TruncatedError:
            return ParseOutcome(
                ParsedHeaders(eth, ip, None, consumed), None, ParseError.TRUNCATED
            )
        except MalformedError:
            return ParseOutcome(
                ParsedHeaders(eth, ip, None, consumed), None, ParseError.MALFORMED
            )
        consumed += l4.data_offset * 4
    elif protocol == IPPROTO_UDP:
        try:
            l4, _ = decode_udp(data, consumed)
        except TruncatedError:
            return ParseOutcome(
                ParsedHeaders(eth, ip, None, consumed), None, ParseError.TRUNCATED
            )
        consumed += 8

    return ParseOutcome(
        ParsedHeaders(eth, ip, l4, consumed), FlowPair(ip.src_ip, ip.dst_ip), None
    )


def parse_stream(
    pkts: Iterable[RawPacket | bytes],
) -> tuple[Sequence[ParseOutcome], ParseStats]:
    """Parse packets in order, returning every outcome plus stream counters."""
    outcomes = []
    stats = ParseStats()
    append = outcomes.append
    add = stats.add
    for pkt in pkts:
        outcome = parse(pkt)
        append(outcome)
        add(outcome)
    return outcomes, stats
