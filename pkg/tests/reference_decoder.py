"""Offset-table reference decoder used as the differential oracle.

Deliberately independent of the package under test: plain byte indexing,
no struct, no shared constants or helpers. Classification precedence for
each layer is: minimum length first (Truncated), then field validity
(Malformed), then the full claimed length (Truncated).

Returns plain dicts so a comparison failure pinpoints the field that
disagrees.
"""


def _be16(b, i):
    return (b[i] << 8) | b[i + 1]


def _be32(b, i):
    return (b[i] << 24) | (b[i + 1] << 16) | (b[i + 2] << 8) | b[i + 3]


def reference_parse(data: bytes) -> dict:
    out = {
        "classification": None,  # "extract" | "accept" | "error"
        "error": None,  # None | "truncated" | "malformed"
        "eth": None,
        "ip": None,
        "l4_kind": None,  # None | "tcp" | "udp"
        "l4": None,
        "pair": None,
        "consumed": None,
    }
    n = len(data)

    if n < 14:
        out["classification"] = "error"
        out["error"] = "truncated"
        return out
    out["eth"] = {
        "dst_mac": bytes(data[0:6]),
        "src_mac": bytes(data[6:12]),
        "ethertype": _be16(data, 12),
    }
    out["consumed"] = 14
    if out["eth"]["ethertype"] != 0x0800:
        out["classification"] = "accept"
        return out

    if n - 14 < 20:
        out["classification"] = "error"
        out["error"] = "truncated"
        return out
    version = data[14] >> 4
    ihl = data[14] & 0x0F
    if version != 4 or ihl < 5:
        out["classification"] = "error"
        out["error"] = "malformed"
        return out
    ip_len = ihl * 4
    if n - 14 < ip_len:
        out["classification"] = "error"
        out["error"] = "truncated"
        return out
    out["ip"] = {
        "version": version,
        "hdr_len": ihl,
        "dscp_ecn": data[15],
        "total_length": _be16(data, 16),
        "identification": _be16(data, 18),
        "flags_fragment": _be16(data, 20),
        "ttl": data[22],
        "protocol": data[23],
        "checksum": _be16(data, 24),
        "src_ip": _be32(data, 26),
        "dst_ip": _be32(data, 30),
        "options": bytes(data[34 : 14 + ip_len]),
    }
    base = 14 + ip_len
    out["consumed"] = base

    protocol = out["ip"]["protocol"]
    if protocol == 6:
        if n - base < 20:
            out["classification"] = "error"
            out["error"] = "truncated"
            return out
        offset_words = data[base + 12] >> 4
        if offset_words < 5:
            out["classification"] = "error"
            out["error"] = "malformed"
            return out
        tcp_len = offset_words * 4
        if n - base < tcp_len:
            out["classification"] = "error"
            out["error"] = "truncated"
            return out
        out["l4_kind"] = "tcp"
        out["l4"] = {
            "src_port": _be16(data, base),
            "dst_port": _be16(data, base + 2),
            "seq": _be32(data, base + 4),
            "ack": _be32(data, base + 8),
            "data_offset": offset_words,
            "flags": ((data[base + 12] & 0x0F) << 8) | data[base + 13],
            "window": _be16(data, base + 14),
            "checksum": _be16(data, base + 16),
            "urgent": _be16(data, base + 18),
            "options": bytes(data[base + 20 : base + tcp_len]),
        }
        out["consumed"] = base + tcp_len
    elif protocol == 17:
        if n - base < 8:
            out["classification"] = "error"
            out["error"] = "truncated"
            return out
        out["l4_kind"] = "udp"
        out["l4"] = {
            "src_port": _be16(data, base),
            "dst_port": _be16(data, base + 2),
            "length": _be16(data, base + 4),
            "checksum": _be16(data, base + 6),
        }
        out["consumed"] = base + 8

    out["classification"] = "extract"
    out["pair"] = (out["ip"]["src_ip"], out["ip"]["dst_ip"])
    return out


def count_ipv4(frames) -> int:
    """Naive single-pass counter of frames that extract a flow pair."""
    return sum(1 for f in frames if reference_parse(f)["classification"] == "extract")
