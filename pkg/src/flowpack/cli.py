"""Command-line client for the flowpack service.

Every subcommand is a thin wrapper over one service endpoint. By default
the CLI runs the service in-process, so no server needs to be running;
point ``--server`` (or $FLOWPACK_SERVER) at a remote instance to use one,
in which case capture/key/output paths are interpreted on the server.

The anonymization key is always referenced by file path (``--key-file``
or $FLOWPACK_KEY_FILE); key bytes never appear on a command line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any

import httpx

SERVER_ENV = "FLOWPACK_SERVER"

_MODES = {
    "in-process": "in_process",
    "in_process": "in_process",
    "socket": "datagram_socket",
    "datagram_socket": "datagram_socket",
}


def _make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    # Embedded mode: drive the ASGI app directly, same request/response
    # surface as a real server but no sockets involved.
    import warnings

    with warnings.catch_warnings():
        # starlette deprecates httpx for a successor that is not released
        warnings.filterwarnings("ignore", message=r"Using `httpx`")
        from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _load_config(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise SystemExit("config file must hold a JSON object: %s" % path)
    return config


def _pick(args: argparse.Namespace, config: dict, name: str, default: Any) -> Any:
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _source(args: argparse.Namespace, config: dict) -> dict:
    capture = _pick(args, config, "capture", None)
    count = _pick(args, config, "synth_count", None)
    if capture is not None and count is not None:
        raise SystemExit("give either a capture file or --synth-count, not both")
    if capture is not None:
        return {"path": capture}
    if count is not None:
        return {
            "synth": {
                "count": int(count),
                "packet_size": int(_pick(args, config, "synth_size", 512)),
                "flows": int(_pick(args, config, "synth_flows", 4)),
            }
        }
    raise SystemExit("no input: give a capture file or --synth-count")


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    try:
        resp = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        raise SystemExit("request failed: %s" % exc)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise SystemExit("error %d: %s" % (resp.status_code, detail))
    return resp.json()


def _print_json(data: dict) -> None:
    print(json.dumps(data, indent=2))


def _cmd_parse(client, args, config) -> int:
    payload = {"source": _source(args, config), "pad": _pick(args, config, "pad", True)}
    data = _post(client, "/parse", payload)
    _print_json(data["stats"])
    return 0


def _cmd_run(client, args, config) -> int:
    out_matrix = _pick(args, config, "out_matrix", None)
    out_report = _pick(args, config, "out_report", None)
    out_summaries = _pick(args, config, "out_summaries", None)
    payload = {
        "source": _source(args, config),
        "np": int(_pick(args, config, "np", 150)),
        "key_file": _pick(args, config, "key_file", None),
        "mode": _MODES[_pick(args, config, "mode", "in-process")],
        "pps": _pick(args, config, "pps", None),
        "loop_count": int(_pick(args, config, "loop", 1)),
        "pad": _pick(args, config, "pad", True),
        "parser_workers": int(_pick(args, config, "workers", 0)),
        "out_matrix": out_matrix,
        "out_report": out_report,
        "out_summaries": out_summaries,
        "include_matrix": bool(getattr(args, "print_matrix", False)),
    }
    ethertype = _pick(args, config, "ethertype", None)
    if ethertype is not None:
        payload["summary_ethertype"] = int(str(ethertype), 0)
    data = _post(client, "/run", payload)
    matrix_tsv = data.pop("matrix_tsv", None)
    _print_json(data)
    if matrix_tsv:
        sys.stdout.write(matrix_tsv)
    requested = {p for p in (out_matrix, out_report, out_summaries) if p}
    written = set(data.get("outputs_written", []))
    if not data["conserved"]:
        print("conservation violated", file=sys.stderr)
        return 1
    if not requested <= written:
        print("missing outputs: %s" % sorted(requested - written), file=sys.stderr)
        return 1
    return 0


def _cmd_bench(client, args, config) -> int:
    sizes = _pick(args, config, "sizes", None)
    if isinstance(sizes, str):
        sizes = [int(s) for s in sizes.split(",") if s]
    payload = {
        "count_per_size": int(_pick(args, config, "count", 100_000)),
        "np": int(_pick(args, config, "np", 150)),
        "key_file": _pick(args, config, "key_file", None),
        "mode": _MODES[_pick(args, config, "mode", "in-process")],
        "parser_workers": int(_pick(args, config, "workers", 0)),
        "flows": int(_pick(args, config, "flows", 64)),
        "out_report": _pick(args, config, "out_report", None),
    }
    if sizes:
        payload["sizes"] = sizes
    data = _post(client, "/bench", payload)
    sys.stdout.write(data["report_tsv"])
    return 0


def _cmd_export(client, args, config) -> int:
    payload = {
        "summaries_path": args.summaries,
        "key_file": _pick(args, config, "key_file", None),
        "out_matrix": _pick(args, config, "out_matrix", None),
        "include_matrix": bool(getattr(args, "print_matrix", False)),
    }
    ethertype = _pick(args, config, "ethertype", None)
    if ethertype is not None:
        payload["summary_ethertype"] = int(str(ethertype), 0)
    data = _post(client, "/export", payload)
    matrix_tsv = data.pop("matrix_tsv", None)
    _print_json(data)
    if matrix_tsv:
        sys.stdout.write(matrix_tsv)
    return 0


def _cmd_simulate_drop(client, args, config) -> int:
    payload = {
        "n_pairs": int(_pick(args, config, "pairs", 1_500_000)),
        "np": int(_pick(args, config, "np", 150)),
    }
    data = _post(client, "/simulate-drop", payload)
    _print_json(data)
    return 0


def _cmd_serve(args, config) -> int:
    import uvicorn

    host = _pick(args, config, "host", "127.0.0.1")
    port = int(_pick(args, config, "port", 8000))
    uvicorn.run("flowpack.service.app:app", host=host, port=port, log_level="info")
    return 0


def _add_source_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("capture", nargs="?", help="pcap file (server-local path)")
    p.add_argument("--synth-count", type=int, help="synthesize N packets instead of reading a capture")
    p.add_argument("--synth-size", type=int, help="synthesized packet size in bytes (default 512)")
    p.add_argument("--synth-flows", type=int, help="distinct flow pairs to cycle through (default 4)")
    p.add_argument("--no-pad", dest="pad", action="store_const", const=False,
                   help="do not zero-pad snap-length records to wire length")


def _add_common_pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--np", type=int, help="flow pairs per summary packet, 1..255 (default 150)")
    p.add_argument("--key-file", help="anonymization key file (or $FLOWPACK_KEY_FILE)")
    p.add_argument("--mode", choices=sorted(_MODES), help="in-process or socket (default in-process)")
    p.add_argument("--workers", type=int, help="parser worker threads, 0 = inline (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowpack",
        description="Parse captures, pack flow pairs into summaries, and build anonymized traffic matrices.",
    )
    parser.add_argument("--server", help="service URL (default: run in-process; or $%s)" % SERVER_ENV)
    parser.add_argument("--config", help="JSON file supplying defaults for any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse a capture and print stream stats")
    _add_source_args(p)

    p = sub.add_parser("run", help="run the full pipeline: parse, aggregate, collect")
    _add_source_args(p)
    _add_common_pipeline_args(p)
    p.add_argument("--ethertype", help="summary ethertype (default 0x88B5)")
    p.add_argument("--pps", type=float, help="pace replay to this packet rate")
    p.add_argument("--loop", type=int, help="replay the capture N times (default 1)")
    p.add_argument("--out-matrix", help="write the anonymized matrix TSV here")
    p.add_argument("--out-report", help="write the rate report TSV here")
    p.add_argument("--out-summaries", help="write raw summary frames here")
    p.add_argument("--print-matrix", action="store_true", help="print the matrix TSV to stdout")

    p = sub.add_parser("bench", help="measure the pipeline over a packet-size ladder")
    _add_common_pipeline_args(p)
    p.add_argument("--sizes", help="comma-separated packet sizes (default 64,128,256,512,1024,1518)")
    p.add_argument("--count", type=int, help="packets per size (default 100000)")
    p.add_argument("--flows", type=int, help="distinct flow pairs (default 64)")
    p.add_argument("--out-report", help="write the rate report TSV here")

    p = sub.add_parser("export", help="build a matrix from a file of summary frames")
    p.add_argument("summaries", help="file of concatenated summary frames")
    p.add_argument("--key-file", help="anonymization key file (or $FLOWPACK_KEY_FILE)")
    p.add_argument("--ethertype", help="summary ethertype (default 0x88B5)")
    p.add_argument("--out-matrix", help="write the matrix TSV here")
    p.add_argument("--print-matrix", action="store_true", help="print the matrix TSV to stdout")

    p = sub.add_parser("simulate-drop", help="slot-model drop rate for a given pairs-per-summary")
    p.add_argument("--np", type=int, help="flow pairs per summary (default 150)")
    p.add_argument("--pairs", type=int, help="number of pairs offered (default 1500000)")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", help="bind address (default 127.0.0.1)")
    p.add_argument("--port", type=int, help="bind port (default 8000)")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = _load_config(args.config)

    if args.command == "serve":
        return _cmd_serve(args, config)

    server = args.server or os.environ.get(SERVER_ENV) or config.get("server")
    handlers = {
        "parse": _cmd_parse,
        "run": _cmd_run,
        "bench": _cmd_bench,
        "export": _cmd_export,
        "simulate-drop": _cmd_simulate_drop,
    }
    with _make_client(server) as client:
        return handlers[args.command](client, args, config)


if __name__ == "__main__":
    sys.exit(main())
