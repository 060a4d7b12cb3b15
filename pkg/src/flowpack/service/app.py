"""FastAPI service wrapping the pipeline.

Batch-style endpoints (/parse, /run, /bench, /export, /simulate-drop)
execute one job per request against server-local files. Collector
sessions (/collectors) hold a live traffic matrix across requests so
multiple producers can stream summary frames to one matrix and export it
when done.
"""

from __future__ import annotations

import base64
import binascii
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from .. import __version__
from ..aggregator import AggregatorConfig, decode_summary, iter_summaries
from ..collector import (
    AnonymizerKey,
    KeyedAnonymizer,
    TrafficMatrix,
    export_matrix,
    matrix_to_tsv,
)
from ..packet_model import PacketError
from ..parser import ParseStats
from ..pipeline import (
    ConfigError,
    PipelineConfig,
    RateReport,
    bench_ladder,
    resolve_key,
    run_pipeline,
)
from ..traffic_gen import CaptureError, CaptureFile, ReplayConfig, read_capture, synthesize_uniform
from . import schemas


class CollectorSession:
    """One live matrix fed by possibly many clients; guarded by a lock."""

    def __init__(self, anonymizer: KeyedAnonymizer, summary_ethertype: int):
        self.anonymizer = anonymizer
        self.summary_ethertype = summary_ethertype
        self.matrix = TrafficMatrix()
        self.summaries_ingested = 0
        self.lock = threading.Lock()


def _bad_request(exc: Exception) -> HTTPException:
    return HTTPException(status_code=400, detail=str(exc))


def _load_capture(source: schemas.CaptureSource) -> CaptureFile:
    if source.synth is not None:
        s = source.synth
        return synthesize_uniform(s.count, s.packet_size, s.flows)
    try:
        return read_capture(source.path)
    except FileNotFoundError:
        raise HTTPException(status_code=404, detail="capture not found: %s" % source.path)
    except CaptureError as exc:
        raise _bad_request(exc)


def _resolve_key(key_file: str | None) -> AnonymizerKey:
    try:
        return resolve_key(PipelineConfig(key_file=key_file))
    except ConfigError as exc:
        raise _bad_request(exc)


def _stats_model(stats: ParseStats) -> schemas.ParseStatsModel:
    return schemas.ParseStatsModel(**stats.as_dict())


def _report_rows(report: RateReport) -> list[schemas.RateRowModel]:
    return [
        schemas.RateRowModel(size_bytes=r.size_bytes, mbps=r.mbps, pps=r.pps)
        for r in report.rows
    ]


def _maybe_matrix_tsv(matrix: TrafficMatrix, include: bool, limit: int) -> str | None:
    if not include:
        return None
    if len(matrix) > limit:
        raise HTTPException(
            status_code=413,
            detail="matrix has %d rows, over the %d inline limit; use out_matrix"
            % (len(matrix), limit),
        )
    return matrix_to_tsv(matrix)


def create_app() -> FastAPI:
    app = FastAPI(
        title="flowpack",
        version=__version__,
        description="Header extraction, flow-pair packing, and anonymized traffic matrices.",
    )
    collectors: dict[str, CollectorSession] = {}
    collectors_lock = threading.Lock()

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/parse", response_model=schemas.ParseResponse)
    def parse_capture(req: schemas.ParseRequest) -> schemas.ParseResponse:
        from ..parser import parse_stream

        cap = _load_capture(req.source)
        _, stats = parse_stream(cap.iter_packets(pad=req.pad))
        return schemas.ParseResponse(stats=_stats_model(stats))

    @app.post("/run", response_model=schemas.RunResponse)
    def run(req: schemas.RunRequest) -> schemas.RunResponse:
        cap = _load_capture(req.source)
        cfg = PipelineConfig(
            aggregator=AggregatorConfig(
                n_p=req.np, summary_ethertype=req.summary_ethertype
            ),
            replay=ReplayConfig(
                mode=req.mode,
                target_pps=req.pps,
                loop_count=req.loop_count,
                pad=req.pad,
                address=req.address,
                port=req.port,
            ),
            key_file=req.key_file,
            parser_workers=req.parser_workers,
            matrix_out=req.out_matrix,
            report_out=req.out_report,
            summaries_out=req.out_summaries,
        )
        try:
            result = run_pipeline(cfg, cap)
        except (ConfigError, OSError, ValueError) as exc:
            raise _bad_request(exc)
        return schemas.RunResponse(
            stats=_stats_model(result.stats),
            pairs_aggregated=result.pairs_aggregated,
            summaries_emitted=result.summaries_emitted,
            matrix_total=result.matrix.total,
            distinct_pairs=len(result.matrix),
            conserved=result.conserved,
            report=_report_rows(result.report),
            duration_s=result.duration,
            outputs_written=result.outputs_written,
            matrix_tsv=_maybe_matrix_tsv(
                result.matrix, req.include_matrix, req.matrix_row_limit
            ),
        )

    @app.post("/bench", response_model=schemas.BenchResponse)
    def bench(req: schemas.BenchRequest) -> schemas.BenchResponse:
        cfg = PipelineConfig(
            aggregator=AggregatorConfig(n_p=req.np),
            replay=ReplayConfig(mode=req.mode),
            key_file=req.key_file,
            parser_workers=req.parser_workers,
        )
        try:
            report = bench_ladder(req.sizes, req.count_per_size, cfg, flows=req.flows)
        except ValueError as exc:
            raise _bad_request(exc)
        outputs = []
        if req.out_report:
            Path(req.out_report).write_text(report.to_tsv(), encoding="ascii")
            outputs.append(req.out_report)
        return schemas.BenchResponse(
            report=_report_rows(report),
            duration_s=report.duration,
            mode=report.mode,
            report_tsv=report.to_tsv(),
            outputs_written=outputs,
        )

    @app.post("/simulate-drop", response_model=schemas.DropResponse)
    def simulate_drop(req: schemas.DropRequest) -> schemas.DropResponse:
        from ..aggregator import simulate_slot_model, theoretical_drop_rate

        result = simulate_slot_model(req.n_pairs, req.np)
        fraction = result.displaced_fraction
        rate = theoretical_drop_rate(req.np)
        return schemas.DropResponse(
            n_pairs=req.n_pairs,
            np=req.np,
            forwarded=result.forwarded,
            displaced=result.displaced,
            displaced_fraction=str(fraction),
            displaced_fraction_float=float(fraction),
            theoretical_rate=str(rate),
            theoretical_rate_float=float(rate),
            matches_theory=fraction == rate,
        )

    @app.post("/export", response_model=schemas.ExportResponse)
    def export(req: schemas.ExportRequest) -> schemas.ExportResponse:
        key = _resolve_key(req.key_file)
        anonymizer = KeyedAnonymizer(key)
        try:
            blob = Path(req.summaries_path).read_bytes()
        except FileNotFoundError:
            raise HTTPException(
                status_code=404, detail="summaries file not found: %s" % req.summaries_path
            )
        matrix = TrafficMatrix()
        count = 0
        try:
            for summary in iter_summaries(blob, req.summary_ethertype):
                from ..collector import ingest_summary

                ingest_summary(matrix, summary, anonymizer)
                count += 1
        except PacketError as exc:
            raise _bad_request(exc)
        outputs = []
        if req.out_matrix:
            export_matrix(matrix, req.out_matrix)
            outputs.append(req.out_matrix)
        return schemas.ExportResponse(
            summaries_read=count,
            matrix_total=matrix.total,
            distinct_pairs=len(matrix),
            outputs_written=outputs,
            matrix_tsv=_maybe_matrix_tsv(matrix, req.include_matrix, req.matrix_row_limit),
        )

    @app.post("/collectors", response_model=schemas.CollectorInfo, status_code=201)
    def create_collector(req: schemas.CollectorCreateRequest) -> schemas.CollectorInfo:
        key = _resolve_key(req.key_file)
        session = CollectorSession(KeyedAnonymizer(key), req.summary_ethertype)
        collector_id = uuid.uuid4().hex
        with collectors_lock:
            collectors[collector_id] = session
        return schemas.CollectorInfo(
            collector_id=collector_id, summaries_ingested=0, matrix_total=0, distinct_pairs=0
        )

    def _get_collector(collector_id: str) -> CollectorSession:
        with collectors_lock:
            session = collectors.get(collector_id)
        if session is None:
            raise HTTPException(status_code=404, detail="no such collector: %s" % collector_id)
        return session

    @app.post("/collectors/{collector_id}/summaries", response_model=schemas.IngestResponse)
    def ingest(collector_id: str, req: schemas.IngestRequest) -> schemas.IngestResponse:
        from ..collector import ingest_summary

        session = _get_collector(collector_id)
        try:
            frames = [base64.b64decode(f, validate=True) for f in req.frames]
        except (binascii.Error, ValueError) as exc:
            raise _bad_request(exc)
        try:
            summaries = [decode_summary(f, session.summary_ethertype) for f in frames]
        except PacketError as exc:
            raise _bad_request(exc)
        pairs = 0
        with session.lock:
            for summary in summaries:
                ingest_summary(session.matrix, summary, session.anonymizer)
                pairs += summary.count
            session.summaries_ingested += len(summaries)
            return schemas.IngestResponse(
                collector_id=collector_id,
                summaries_ingested=session.summaries_ingested,
                matrix_total=session.matrix.total,
                distinct_pairs=len(session.matrix),
                pairs_ingested=pairs,
            )

    @app.get("/collectors/{collector_id}", response_model=schemas.CollectorInfo)
    def collector_info(collector_id: str) -> schemas.CollectorInfo:
        session = _get_collector(collector_id)
        with session.lock:
            return schemas.CollectorInfo(
                collector_id=collector_id,
                summaries_ingested=session.summaries_ingested,
                matrix_total=session.matrix.total,
                distinct_pairs=len(session.matrix),
            )

    @app.get("/collectors/{collector_id}/matrix", response_class=PlainTextResponse)
    def collector_matrix(collector_id: str) -> str:
        session = _get_collector(collector_id)
        with session.lock:
            return matrix_to_tsv(session.matrix)

    @app.delete("/collectors/{collector_id}", status_code=204)
    def delete_collector(collector_id: str) -> None:
        with collectors_lock:
            if collectors.pop(collector_id, None) is None:
                raise HTTPException(status_code=404, detail="no such collector: %s" % collector_id)

    return app


app = create_app()
