"""Hand-rolled frame construction and fuzzing for tests.

Builders assemble frames byte by byte with int.to_bytes so they stay
independent of the package's encoders, and the fuzzer exercises every
branch of the parse graph: valid TCP/UDP/other-protocol frames with and
without options, truncations at every boundary, malformed length fields,
and non-IP ethertypes.
"""

import random

MAC_A = b"\x02\x00\x00\x00\x00\x01"
MAC_B = b"\x02\x00\x00\x00\x00\x02"


def eth(payload=b"", ethertype=0x0800, dst=MAC_B, src=MAC_A):
    return dst + src + ethertype.to_bytes(2, "big") + payload


def ipv4(
    payload=b"",
    *,
    version=4,
    ihl=5,
    dscp_ecn=0,
    total_length=None,
    identification=0,
    flags_fragment=0x4000,
    ttl=64,
    protocol=6,
    checksum=0,
    src=0x0A000001,
    dst=0x0A000002,
    options=b"",
):
    if total_length is None:
        total_length = ihl * 4 + len(payload)
    return (
        bytes([(version << 4) | ihl, dscp_ecn])
        + total_length.to_bytes(2, "big")
        + identification.to_bytes(2, "big")
        + flags_fragment.to_bytes(2, "big")
        + bytes([ttl, protocol])
        + checksum.to_bytes(2, "big")
        + src.to_bytes(4, "big")
        + dst.to_bytes(4, "big")
        + options
        + payload
    )


def tcp(
    payload=b"",
    *,
    src_port=1234,
    dst_port=80,
    seq=0,
    ack=0,
    data_offset=5,
    flags=0x010,
    window=65535,
    checksum=0,
    urgent=0,
    options=b"",
):
    word = (data_offset << 12) | flags
    return (
        src_port.to_bytes(2, "big")
        + dst_port.to_bytes(2, "big")
        + seq.to_bytes(4, "big")
        + ack.to_bytes(4, "big")
        + word.to_bytes(2, "big")
        + window.to_bytes(2, "big")
        + checksum.to_bytes(2, "big")
        + urgent.to_bytes(2, "big")
        + options
        + payload
    )


def udp(payload=b"", *, src_port=53, dst_port=53, length=None, checksum=0):
    if length is None:
        length = 8 + len(payload)
    return (
        src_port.to_bytes(2, "big")
        + dst_port.to_bytes(2, "big")
        + length.to_bytes(2, "big")
        + checksum.to_bytes(2, "big")
        + payload
    )


def tcp_ipv4_frame(src=0x0A000001, dst=0x0A000002, *, ip_options=b"", tcp_options=b"", payload=b""):
    assert len(ip_options) % 4 == 0 and len(tcp_options) % 4 == 0
    seg = tcp(payload, data_offset=5 + len(tcp_options) // 4, options=tcp_options)
    return eth(ipv4(seg, ihl=5 + len(ip_options) // 4, options=ip_options, src=src, dst=dst))


def udp_ipv4_frame(src=0x0A000001, dst=0x0A000002, *, payload=b""):
    return eth(ipv4(udp(payload), protocol=17, src=src, dst=dst))


def random_frame(rng: random.Random) -> bytes:
    """One fuzzed frame; distribution favors IPv4 with occasional damage."""
    roll = rng.randrange(100)

    if roll < 8:  # too short for Ethernet
        return rng.randbytes(rng.randrange(0, 14))

    if roll < 20:  # non-IPv4 ethertype (ARP, VLAN, IPv6, random)
        ethertype = rng.choice(
            [0x0806, 0x8100, 0x86DD, 0x88B5, rng.randrange(0x0600, 0x10000)]
        )
        return eth(rng.randbytes(rng.randrange(0, 80)), ethertype=ethertype)

    # IPv4 family: mostly valid fields, sometimes deliberately broken
    version = 4 if rng.random() < 0.9 else rng.randrange(0, 16)
    ihl = rng.choice([5, 5, 5, 6, 8, 15]) if rng.random() < 0.9 else rng.randrange(0, 5)
    options = rng.randbytes(max(0, (ihl - 5) * 4))
    protocol = rng.choice([6, 6, 6, 17, 17, 47, 1, rng.randrange(0, 256)])
    src = rng.getrandbits(32)
    dst = rng.getrandbits(32)

    if protocol == 6:
        offset = rng.choice([5, 5, 8, 15]) if rng.random() < 0.9 else rng.randrange(0, 5)
        seg = tcp(
            rng.randbytes(rng.randrange(0, 32)),
            src_port=rng.getrandbits(16),
            dst_port=rng.getrandbits(16),
            seq=rng.getrandbits(32),
            ack=rng.getrandbits(32),
            data_offset=offset,
            flags=rng.getrandbits(12),
            options=rng.randbytes(max(0, (offset - 5) * 4)),
        )
    elif protocol == 17:
        seg = udp(
            rng.randbytes(rng.randrange(0, 32)),
            src_port=rng.getrandbits(16),
            dst_port=rng.getrandbits(16),
            length=rng.getrandbits(16),
            checksum=rng.getrandbits(16),
        )
    else:
        seg = rng.randbytes(rng.randrange(0, 40))

    frame = eth(
        ipv4(
            seg,
            version=version,
            ihl=ihl,
            ttl=rng.randrange(0, 256),
            protocol=protocol,
            checksum=rng.getrandbits(16),
            src=src,
            dst=dst,
            options=options,
        )
    )

    damage = rng.random()
    if damage < 0.15:  # truncate somewhere, boundaries included
        cut = rng.choice(
            [rng.randrange(14, len(frame) + 1), 14, 20, 33, 34, 54, len(frame) - 1]
        )
        frame = frame[: min(cut, len(frame))]
    elif damage < 0.25:  # zero padding, as a generator would add
        frame += b"\x00" * rng.randrange(1, 64)

    return frame


def fuzz_frames(count: int, seed: int = 0xF10C):
    rng = random.Random(seed)
    return [random_frame(rng) for _ in range(count)]
