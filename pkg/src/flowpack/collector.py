"""Host-side collection: anonymize addresses and maintain the traffic matrix.

Addresses are pseudonymized with a keyed PRF (BLAKE2s in keyed MAC mode,
truncated to 32 bits): deterministic under a fixed key, unrecoverable
without it. The anonymizer is pluggable — anything callable as
``anonymize(ip) -> int`` can replace the default, e.g. a
prefix-preserving scheme. 32-bit ids keep matrix keys compact; the rare
birthday collisions are accepted.

The key itself must never end up in any output artifact: supply it via a
key file or environment variable, and note that ``AnonymizerKey`` redacts
its repr.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from hashlib import blake2s
from pathlib import Path
from typing import Callable, Iterable, TextIO, Union

from .aggregator import SummaryPacket

KEY_LEN = 16

# Environment variable naming a key file, the no-flags alternative.
KEY_FILE_ENV = "FLOWPACK_KEY_FILE"

Anonymizer = Callable[[int], int]


@dataclass(frozen=True)
class AnonymizerKey:
    """16-byte secret for the keyed PRF. Never serialized anywhere."""

    key: bytes

    def __post_init__(self) -> None:
        if len(self.key) != KEY_LEN:
            raise ValueError("key must be exactly %d bytes, got %d" % (KEY_LEN, len(self.key)))

    def __repr__(self) -> str:  # keep the secret out of logs and tracebacks
        return "AnonymizerKey(<%d bytes>)" % KEY_LEN

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "AnonymizerKey":
        return cls(Path(path).read_bytes())

    @classmethod
    def generate(cls) -> "AnonymizerKey":
        return cls(os.urandom(KEY_LEN))


def anonymize(ip: int, key: AnonymizerKey) -> int:
    """Keyed pseudonym of a 32-bit address, itself 32 bits wide."""
    digest = blake2s(ip.to_bytes(4, "big"), key=key.key, digest_size=4).digest()
    return int.from_bytes(digest, "big")


class KeyedAnonymizer:
    """Caching wrapper around :func:`anonymize` for one fixed key.

    Pure per address, so the cache is just memoization; safe to share
    across threads (worst case both compute the same value).
    """

    def __init__(self, key: AnonymizerKey):
        self.key = key
        self._cache: dict[int, int] = {}

    def __call__(self, ip: int) -> int:
        cached = self._cache.get(ip)
        if cached is None:
            cached = self._cache[ip] = anonymize(ip, self.key)
        return cached


class TrafficMatrix:
    """Sparse (anon_src, anon_dst) -> packet count map.

    Zero-count entries are never stored; ``total`` always equals the sum
    of all entry counts. Single-writer; shard and :func:`merge` for
    parallel collection.
    """

    __slots__ = ("entries", "total")

    def __init__(self) -> None:
        self.entries: dict[tuple[int, int], int] = {}
        self.total: int = 0

    def add_pair(self, anon_src: int, anon_dst: int, count: int = 1) -> None:
        key = (anon_src, anon_dst)
        self.entries[key] = self.entries.get(key, 0) + count
        self.total += count

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrafficMatrix):
            return NotImplemented
        return self.entries == other.entries

    def __repr__(self) -> str:
        return "TrafficMatrix(%d entries, total=%d)" % (len(self.entries), self.total)


def _as_anonymizer(key: Union[AnonymizerKey, Anonymizer]) -> Anonymizer:
    if isinstance(key, AnonymizerKey):
        return KeyedAnonymizer(key)
    return key


def ingest_summary(
    matrix: TrafficMatrix,
    summary: SummaryPacket,
    key: Union[AnonymizerKey, Anonymizer],
) -> TrafficMatrix:
    """Count every pair of a summary into the matrix; returns the matrix."""
    anon = _as_anonymizer(key)
    entries = matrix.entries
    for src, dst in summary.pairs:
        k = (anon(src), anon(dst))
        entries[k] = entries.get(k, 0) + 1
    matrix.total += len(summary.pairs)
    return matrix


def merge(a: TrafficMatrix, b: TrafficMatrix) -> TrafficMatrix:
    """Entry-wise sum into a new matrix; commutative and associative,
    with the empty matrix as identity. Only meaningful for matrices built
    under the same key."""
    out = TrafficMatrix()
    out.entries = dict(a.entries)
    for key, count in b.entries.items():
        out.entries[key] = out.entries.get(key, 0) + count
    out.total = a.total + b.total
    return out


def export_matrix(matrix: TrafficMatrix, sink: Union[TextIO, str, Path]) -> int:
    """Write ``anon_src<TAB>anon_dst<TAB>count`` rows sorted by key.

    Ids are unsigned decimal; sorted order makes the export byte-stable
    across runs. Returns the number of rows written.
    """
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="ascii") as fh:
            return export_matrix(matrix, fh)
    rows = 0
    for (src, dst) in sorted(matrix.entries):
        sink.write("%d\t%d\t%d\n" % (src, dst, matrix.entries[(src, dst)]))
        rows += 1
    return rows


def matrix_to_tsv(matrix: TrafficMatrix) -> str:
    lines = [
        "%d\t%d\t%d" % (src, dst, count)
        for (src, dst), count in sorted(matrix.entries.items())
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def import_matrix(source: Union[Iterable[str], str, Path]) -> TrafficMatrix:
    """Rebuild a matrix from exported rows (inverse of :func:`export_matrix`)."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="ascii") as fh:
            return import_matrix(fh)
    matrix = TrafficMatrix()
    for line in source:
        line = line.strip()
        if not line:
            continue
        src, dst, count = line.split("\t")
        matrix.add_pair(int(src), int(dst), int(count))
    return matrix
