"""End-to-end pipeline and the rate-report generator.

Stages are connected by bounded queues with backpressure: a replay
thread batches packets into a queue, optional parser workers fan out
(and are re-ordered by batch index), and a single consumer owns the
aggregator and the traffic matrix. With ``parser_workers == 0`` the
consumer parses inline, which is the fastest configuration under the
GIL; worker counts only change scheduling, never results.

Conservation holds at every parallelism level: IPv4 frames parsed ==
pairs aggregated == matrix total, and summaries emitted ==
ceil(ipv4 / n_p) with the final flush included.

Rate accounting counts packet bytes only (no Ethernet preamble or
inter-frame gap), and the measurement clock starts when the first packet
reaches the parser, so trace synthesis and file loading are excluded.
"""

from __future__ import annotations

import os
import queue
import socket
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, Union

from .aggregator import Aggregator, AggregatorConfig, encode_summary
from .collector import (
    KEY_FILE_ENV,
    AnonymizerKey,
    KeyedAnonymizer,
    TrafficMatrix,
    export_matrix,
)
from .packet_model import RawPacket, TcpHeader, UdpHeader
from .parser import ParseStats, parse
from .traffic_gen import (
    MIN_TCP_FRAME,
    CaptureFile,
    ReplayConfig,
    ReplayStats,
    replay,
    synthesize_uniform,
)

REPORT_HEADER = "size_bytes\tmbps\tpps"

TABLE_1_SIZES = (64, 128, 256, 512, 1024, 1518)  # the conventional size ladder

_END = object()
_WORKER_DONE = object()


class PipelineError(Exception):
    pass


class ConfigError(PipelineError):
    pass


@dataclass(frozen=True, slots=True)
class RateRow:
    size_bytes: float
    mbps: float
    pps: float


@dataclass
class RateReport:
    rows: list[RateRow]
    duration: float
    mode: str

    def to_tsv(self) -> str:
        lines = [
            "# data rate counts packet bytes only; preamble and inter-frame gap excluded",
            "# mode=%s duration_s=%.6f" % (self.mode, self.duration),
            REPORT_HEADER,
        ]
        for row in self.rows:
            size = "%d" % row.size_bytes if row.size_bytes.is_integer() else "%.1f" % row.size_bytes
            lines.append("%s\t%.3f\t%.3f" % (size, row.mbps, row.pps))
        return "\n".join(lines) + "\n"


def compute_rates(packets: int, nbytes: int, duration: float) -> tuple[float, float]:
    """(Mbps, pps) over a measured interval; duration must be positive."""
    if duration <= 0:
        raise ValueError("duration must be positive, got %r" % (duration,))
    return nbytes * 8 / duration / 1e6, packets / duration


@dataclass
class PipelineConfig:
    aggregator: AggregatorConfig = field(default_factory=AggregatorConfig)
    replay: ReplayConfig = field(default_factory=ReplayConfig)
    key: AnonymizerKey | None = None
    key_file: Union[str, Path, None] = None  # fallback: $FLOWPACK_KEY_FILE
    parser_workers: int = 0  # 0: parse inline on the consumer thread
    batch_size: int = 1024
    queue_depth: int = 8
    matrix_out: Union[str, Path, None] = None
    report_out: Union[str, Path, None] = None
    summaries_out: Union[str, Path, None] = None  # concatenated summary frames
    socket_timeout: float = 10.0

    def __post_init__(self) -> None:
        if self.parser_workers < 0:
            raise ConfigError("parser_workers must be >= 0")
        if self.batch_size < 1 or self.queue_depth < 1:
            raise ConfigError("batch_size and queue_depth must be >= 1")


def resolve_key(cfg: PipelineConfig) -> AnonymizerKey:
    """Key from config, key file, or the environment; never from argv."""
    if cfg.key is not None:
        return cfg.key
    path = cfg.key_file or os.environ.get(KEY_FILE_ENV)
    if not path:
        raise ConfigError(
            "no anonymization key: set PipelineConfig.key, key_file, or $%s" % KEY_FILE_ENV
        )
    try:
        return AnonymizerKey.from_file(path)
    except (OSError, ValueError) as exc:
        raise ConfigError("cannot load key from %s: %s" % (path, exc)) from exc


@dataclass
class PipelineResult:
    stats: ParseStats
    pairs_aggregated: int
    summaries_emitted: int
    matrix: TrafficMatrix
    report: RateReport
    packets_delivered: int
    bytes_delivered: int
    duration: float
    n_p: int
    replay_stats: ReplayStats | None = None
    outputs_written: list[str] = field(default_factory=list)

    @property
    def conserved(self) -> bool:
        ipv4 = self.stats.ipv4
        expected_summaries = -(-ipv4 // self.n_p)
        return (
            self.pairs_aggregated == ipv4
            and self.matrix.total == ipv4
            and self.summaries_emitted == expected_summaries
        )


class _Batcher:
    """Replay sink that groups packets into indexed batches on a bounded queue."""

    def __init__(self, q: queue.Queue, batch_size: int):
        self._q = q
        self._n = batch_size
        self._buf: list[RawPacket] = []
        self._idx = 0

    def __call__(self, pkt: RawPacket) -> None:
        buf = self._buf
        buf.append(pkt)
        if len(buf) >= self._n:
            self._q.put((self._idx, buf))
            self._idx += 1
            self._buf = []

    def flush(self) -> None:
        if self._buf:
            self._q.put((self._idx, self._buf))
            self._idx += 1
            self._buf = []


def _produce(cap, replay_cfg, batcher, in_q, n_consumers, box):
    try:
        box["replay"] = replay(cap, replay_cfg, sink=batcher)
        batcher.flush()
    except BaseException as exc:  # propagate through the consumer
        box["error"] = exc
    finally:
        for _ in range(n_consumers):
            in_q.put(_END)


def _parse_worker(in_q, out_q, box):
    try:
        while True:
            item = in_q.get()
            if item is _END:
                break
            idx, batch = item
            stats = ParseStats()
            add = stats.add
            pairs = []
            append = pairs.append
            for pkt in batch:
                outcome = parse(pkt)
                add(outcome)
                if outcome.pair is not None:
                    append(outcome.pair)
            out_q.put((idx, pairs, stats, sum(len(p.data) for p in batch)))
    except BaseException as exc:
        box["error"] = exc
    finally:
        out_q.put(_WORKER_DONE)


class _Consumer:
    """Single owner of the aggregator, matrix, and summary log."""

    def __init__(self, cfg: PipelineConfig, anonymizer: KeyedAnonymizer, summary_fh):
        self.aggregator = Aggregator(cfg.aggregator)
        self.anonymizer = anonymizer
        self.matrix = TrafficMatrix()
        self.summary_fh = summary_fh
        self.stats = ParseStats()
        self.pairs = 0
        self.summaries = 0
        self.bytes = 0
        self.t_first: float | None = None
        self.t_last: float | None = None

    def _take_summary(self, summary) -> None:
        self.summaries += 1
        anon = self.anonymizer
        entries = self.matrix.entries
        for src, dst in summary.pairs:
            k = (anon(src), anon(dst))
            entries[k] = entries.get(k, 0) + 1
        self.matrix.total += len(summary.pairs)
        if self.summary_fh is not None:
            self.summary_fh.write(encode_summary(summary))

    def consume_packets(self, packets: Iterable[RawPacket | bytes]) -> None:
        """Parse + aggregate + collect; the hot loop keeps counters local."""
        if self.t_first is None:
            self.t_first = time.perf_counter()
        total = ipv4 = tcp = udp = other_l4 = non_ip = errored = 0
        push = self.aggregator.push
        take_summary = self._take_summary
        for pkt in packets:
            outcome = parse(pkt)
            total += 1
            pair = outcome.pair
            if pair is not None:
                ipv4 += 1
                l4 = outcome.headers.l4
                if type(l4) is TcpHeader:
                    tcp += 1
                elif type(l4) is UdpHeader:
                    udp += 1
                else:
                    other_l4 += 1
                summary = push(pair)
                if summary is not None:
                    take_summary(summary)
            elif outcome.error is not None:
                errored += 1
            else:
                non_ip += 1
        s = self.stats
        s.total += total
        s.ipv4 += ipv4
        s.tcp += tcp
        s.udp += udp
        s.other_l4 += other_l4
        s.non_ip += non_ip
        s.errored += errored
        self.pairs += ipv4
        self.t_last = time.perf_counter()

    def consume_parsed(self, pairs, stats: ParseStats) -> None:
        if self.t_first is None:
            self.t_first = time.perf_counter()
        push = self.aggregator.push
        take_summary = self._take_summary
        for pair in pairs:
            summary = push(pair)
            if summary is not None:
                take_summary(summary)
        self.stats.merge(stats)
        self.pairs += len(pairs)
        self.t_last = time.perf_counter()

    def finish(self) -> None:
        summary = self.aggregator.flush()
        if summary is not None:
            self._take_summary(summary)

    @property
    def duration(self) -> float:
        if self.t_first is None or self.t_last is None:
            return 1e-9
        return max(self.t_last - self.t_first, 1e-9)


def _drain_until_dead(q: queue.Queue, threads: list[threading.Thread]) -> None:
    """Discard queue items so blocked stage threads can run to completion."""
    while any(t.is_alive() for t in threads):
        try:
            q.get(timeout=0.05)
        except queue.Empty:
            pass


def _run_in_process(cfg: PipelineConfig, cap: CaptureFile, consumer: _Consumer) -> ReplayStats | None:
    in_q: queue.Queue = queue.Queue(maxsize=cfg.queue_depth)
    box: dict = {}
    workers = cfg.parser_workers
    n_consumers = max(workers, 1)
    batcher = _Batcher(in_q, cfg.batch_size)
    producer = threading.Thread(
        target=_produce,
        args=(cap, cfg.replay, batcher, in_q, n_consumers, box),
        name="flowpack-replay",
        daemon=True,
    )
    producer.start()

    if workers == 0:
        try:
            while True:
                item = in_q.get()
                if item is _END:
                    break
                _, batch = item
                consumer.consume_packets(batch)
                consumer.bytes += sum(len(p.data) for p in batch)
        except BaseException:
            _drain_until_dead(in_q, [producer])
            raise
    else:
        out_q: queue.Queue = queue.Queue(maxsize=cfg.queue_depth)
        threads = [
            threading.Thread(
                target=_parse_worker,
                args=(in_q, out_q, box),
                name="flowpack-parse-%d" % i,
                daemon=True,
            )
            for i in range(workers)
        ]
        for t in threads:
            t.start()
        try:
            done = 0
            next_idx = 0
            pending: dict[int, tuple] = {}
            while done < workers:
                item = out_q.get()
                if item is _WORKER_DONE:
                    done += 1
                    continue
                idx, pairs, stats, nbytes = item
                pending[idx] = (pairs, stats, nbytes)
                while next_idx in pending:
                    pairs, stats, nbytes = pending.pop(next_idx)
                    consumer.consume_parsed(pairs, stats)
                    consumer.bytes += nbytes
                    next_idx += 1
        except BaseException:
            _drain_until_dead(out_q, threads)
            producer.join()
            raise
        for t in threads:
            t.join()
        # a crashed worker leaves a gap in the batch indices; the error in
        # the box is authoritative, so pending is empty on the happy path
        if "error" not in box:
            while next_idx in pending:
                pairs, stats, nbytes = pending.pop(next_idx)
                consumer.consume_parsed(pairs, stats)
                consumer.bytes += nbytes
                next_idx += 1

    if "error" in box:
        _drain_until_dead(in_q, [producer])
        producer.join()
        raise box["error"]
    producer.join()
    return box.get("replay")


def _run_datagram(cfg: PipelineConfig, cap: CaptureFile, consumer: _Consumer) -> ReplayStats | None:
    rx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    box: dict = {}
    try:
        rx.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 23)
        rx.bind((cfg.replay.address, cfg.replay.port))
        rx.settimeout(cfg.socket_timeout)

        def _send():
            try:
                box["replay"] = replay(cap, cfg.replay)
            except BaseException as exc:
                box["error"] = exc
            finally:
                done = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
                try:  # zero-length datagram marks end of stream
                    done.sendto(b"", (cfg.replay.address, cfg.replay.port))
                finally:
                    done.close()

        sender = threading.Thread(target=_send, name="flowpack-send", daemon=True)
        sender.start()

        batch: list[bytes] = []
        batch_size = cfg.batch_size
        while True:
            try:
                data, _ = rx.recvfrom(65535)
            except socket.timeout:
                break
            if not data:
                break
            batch.append(data)
            consumer.bytes += len(data)
            if len(batch) >= batch_size:
                consumer.consume_packets(batch)
                batch = []
        if batch:
            consumer.consume_packets(batch)
        sender.join()
    finally:
        rx.close()
    if "error" in box:
        raise box["error"]
    return box.get("replay")


def run_pipeline(cfg: PipelineConfig, cap: CaptureFile) -> PipelineResult:
    """Run a capture through parse -> aggregate -> collect and measure rates.

    Output files named in the config are written on success and removed
    if anything fails partway.
    """
    key = resolve_key(cfg)
    anonymizer = KeyedAnonymizer(key)

    created: list[Path] = []
    summary_fh = None
    try:
        if cfg.summaries_out is not None:
            path = Path(cfg.summaries_out)
            summary_fh = open(path, "wb")
            created.append(path)
        consumer = _Consumer(cfg, anonymizer, summary_fh)

        if cfg.replay.mode == "in_process":
            replay_stats = _run_in_process(cfg, cap, consumer)
        else:
            replay_stats = _run_datagram(cfg, cap, consumer)
        consumer.finish()
        if summary_fh is not None:
            summary_fh.close()
            summary_fh = None

        duration = consumer.duration
        packets = consumer.stats.total
        nbytes = consumer.bytes
        mbps, pps = compute_rates(packets, nbytes, duration)
        mean_size = nbytes / packets if packets else 0.0
        report = RateReport(
            [RateRow(mean_size, mbps, pps)], duration, cfg.replay.mode
        )

        result = PipelineResult(
            stats=consumer.stats,
            pairs_aggregated=consumer.pairs,
            summaries_emitted=consumer.summaries,
            matrix=consumer.matrix,
            report=report,
            packets_delivered=packets,
            bytes_delivered=nbytes,
            duration=duration,
            n_p=cfg.aggregator.n_p,
            replay_stats=replay_stats,
        )

        if cfg.matrix_out is not None:
            path = Path(cfg.matrix_out)
            created.append(path)
            export_matrix(result.matrix, path)
        if cfg.report_out is not None:
            path = Path(cfg.report_out)
            created.append(path)
            path.write_text(report.to_tsv(), encoding="ascii")
        result.outputs_written = [str(p) for p in created]
        return result
    except BaseException:
        if summary_fh is not None:
            summary_fh.close()
        for path in created:  # no partial outputs
            try:
                path.unlink()
            except OSError:
                pass
        raise


def bench_ladder(
    sizes: Sequence[int],
    count_per_size: int,
    cfg: PipelineConfig | None = None,
    flows: int = 64,
) -> RateReport:
    """Measure the full pipeline once per packet size, smallest first.

    Rates come from synthesized fixed-size TCP traffic, so every row
    satisfies ``mbps == pps * size * 8 / 1e6`` up to float rounding. A
    run without a configured key gets an ephemeral one; the bench output
    is the report, not the matrix.
    """
    if not sizes:
        raise ValueError("sizes must be nonempty")
    for size in sizes:
        if size < MIN_TCP_FRAME:
            raise ValueError("size %d below minimum frame of %d bytes" % (size, MIN_TCP_FRAME))
    cfg = cfg or PipelineConfig()
    try:
        key = resolve_key(cfg)
    except ConfigError:
        key = AnonymizerKey.generate()

    rows = []
    total_duration = 0.0
    for size in sorted(sizes):
        cap = synthesize_uniform(count_per_size, size, flows)
        sub = replace(cfg, key=key, matrix_out=None, report_out=None, summaries_out=None)
        result = run_pipeline(sub, cap)
        if not result.conserved:
            raise PipelineError("conservation violated at size %d" % size)
        mbps, pps = compute_rates(
            result.packets_delivered, result.bytes_delivered, result.duration
        )
        rows.append(RateRow(float(size), mbps, pps))
        total_duration += result.duration
    return RateReport(rows, total_duration, cfg.replay.mode)
