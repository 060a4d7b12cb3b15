"""flowpack: NIC-style header extraction, flow-pair packing, and anonymized
traffic matrices, with a replay/benchmark harness around the pipeline."""

from .packet_model import (
    ETHERTYPE_IPV4,
    EthernetHeader,
    FlowPair,
    Ipv4Header,
    MalformedError,
    PacketError,
    ParsedHeaders,
    RawPacket,
    TcpHeader,
    TruncatedError,
    UdpHeader,
    decode_ethernet,
    decode_ipv4,
    decode_tcp,
    decode_udp,
    encode_headers,
)
from .parser import ParseError, ParseOutcome, ParseStats, Verdict, parse, parse_stream
from .aggregator import (
    DEFAULT_SUMMARY_ETHERTYPE,
    Aggregator,
    AggregatorConfig,
    SummaryPacket,
    WrongProtocolError,
    decode_summary,
    encode_summary,
    iter_summaries,
    simulate_slot_model,
    theoretical_drop_rate,
)
from .collector import (
    AnonymizerKey,
    KeyedAnonymizer,
    TrafficMatrix,
    anonymize,
    export_matrix,
    import_matrix,
    ingest_summary,
    merge,
)
from .traffic_gen import (
    BadMagicError,
    CaptureFile,
    CaptureRecord,
    ReplayConfig,
    ReplayStats,
    TruncatedRecordError,
    pad_packet,
    read_capture,
    replay,
    synthesize_uniform,
    write_capture,
)
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    RateReport,
    RateRow,
    bench_ladder,
    compute_rates,
    run_pipeline,
)

__version__ = "0.1.0"
