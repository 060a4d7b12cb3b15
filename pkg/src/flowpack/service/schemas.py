"""Pydantic request/response models for the HTTP service.

Anonymization keys are always referenced by server-side file path (or
left to the server's environment); key bytes never travel through the
API or appear in a response.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

DEFAULT_LADDER = [64, 128, 256, 512, 1024, 1518]

Mode = Literal["in_process", "datagram_socket"]


class SynthSpec(BaseModel):
    """Parameters for synthesizing fixed-size TCP traffic on the server."""

    count: int = Field(ge=0)
    packet_size: int = Field(ge=54, le=9000)
    flows: int = Field(default=4, ge=1)


class CaptureSource(BaseModel):
    """Either a server-local pcap path or a synthesis spec, never both."""

    path: Optional[str] = None
    synth: Optional[SynthSpec] = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "CaptureSource":
        if (self.path is None) == (self.synth is None):
            raise ValueError("provide exactly one of 'path' or 'synth'")
        return self


class ParseStatsModel(BaseModel):
    total: int
    ipv4: int
    tcp: int
    udp: int
    other_l4: int
    non_ip: int
    errored: int


class ParseRequest(BaseModel):
    source: CaptureSource
    pad: bool = True


class ParseResponse(BaseModel):
    stats: ParseStatsModel


class RateRowModel(BaseModel):
    size_bytes: float
    mbps: float
    pps: float


class RunRequest(BaseModel):
    source: CaptureSource
    np: int = Field(default=150, ge=1, le=255, description="flow pairs per summary")
    summary_ethertype: int = Field(default=0x88B5, ge=0, le=0xFFFF)
    key_file: Optional[str] = None  # server-local; default: server environment
    mode: Mode = "in_process"
    pps: Optional[float] = Field(default=None, gt=0)
    loop_count: int = Field(default=1, ge=1)
    pad: bool = True
    parser_workers: int = Field(default=0, ge=0)
    address: str = "127.0.0.1"
    port: int = Field(default=9184, ge=1, le=65535)
    out_matrix: Optional[str] = None
    out_report: Optional[str] = None
    out_summaries: Optional[str] = None
    include_matrix: bool = False
    matrix_row_limit: int = Field(default=100_000, ge=1)


class RunResponse(BaseModel):
    stats: ParseStatsModel
    pairs_aggregated: int
    summaries_emitted: int
    matrix_total: int
    distinct_pairs: int
    conserved: bool
    report: list[RateRowModel]
    duration_s: float
    outputs_written: list[str]
    matrix_tsv: Optional[str] = None


class BenchRequest(BaseModel):
    sizes: list[int] = Field(default_factory=lambda: list(DEFAULT_LADDER))
    count_per_size: int = Field(default=100_000, ge=1)
    np: int = Field(default=150, ge=1, le=255)
    key_file: Optional[str] = None
    mode: Mode = "in_process"
    parser_workers: int = Field(default=0, ge=0)
    flows: int = Field(default=64, ge=1)
    out_report: Optional[str] = None


class BenchResponse(BaseModel):
    report: list[RateRowModel]
    duration_s: float
    mode: Mode
    report_tsv: str
    outputs_written: list[str]


class DropRequest(BaseModel):
    n_pairs: int = Field(default=1_500_000, ge=0)
    np: int = Field(default=150, ge=1, le=255)


class DropResponse(BaseModel):
    n_pairs: int
    np: int
    forwarded: int
    displaced: int
    displaced_fraction: str  # exact, e.g. "1/151"
    displaced_fraction_float: float
    theoretical_rate: str
    theoretical_rate_float: float
    matches_theory: bool


class ExportRequest(BaseModel):
    summaries_path: str  # server-local file of concatenated summary frames
    key_file: Optional[str] = None
    summary_ethertype: int = Field(default=0x88B5, ge=0, le=0xFFFF)
    out_matrix: Optional[str] = None
    include_matrix: bool = True
    matrix_row_limit: int = Field(default=100_000, ge=1)


class ExportResponse(BaseModel):
    summaries_read: int
    matrix_total: int
    distinct_pairs: int
    outputs_written: list[str]
    matrix_tsv: Optional[str] = None


class CollectorCreateRequest(BaseModel):
    key_file: Optional[str] = None  # default: server environment
    summary_ethertype: int = Field(default=0x88B5, ge=0, le=0xFFFF)


class CollectorInfo(BaseModel):
    collector_id: str
    summaries_ingested: int
    matrix_total: int
    distinct_pairs: int


class IngestRequest(BaseModel):
    frames: list[str]  # base64-encoded summary frames


class IngestResponse(CollectorInfo):
    pairs_ingested: int


class HealthResponse(BaseModel):
    status: str
    version: str
