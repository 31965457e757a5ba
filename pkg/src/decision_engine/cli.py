"""Command line entry point.

Exit codes: 0 success, 1 lookup failure (missing generation, unknown
channel, unreachable engine), 2 invalid configuration or scenario,
3 runtime failure (including unfinished jobs at the end of a run).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .config import load_config, validate_config
from .dataspace import read_archive
from .errors import ConfigParseError, EngineError, ScenarioTimeout

EXIT_OK, EXIT_LOOKUP, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


def _err(*lines: str) -> None:
    for line in lines:
        print(line, file=sys.stderr)


def _write_report(report, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(report.to_json(), encoding="utf-8")
    return path


# -- run -----------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    from .sim import load_scenario, run_scenario
    from .stdlib import standard_registry

    try:
        cfg = load_config(args.config)
    except ConfigParseError as exc:
        _err("configuration errors:", *(f"  {line}" for line in str(exc).splitlines()))
        return EXIT_INVALID
    problems = validate_config(cfg, standard_registry())
    if problems:
        _err(f"configuration has {len(problems)} problem(s):", *(f"  {p}" for p in problems))
        return EXIT_INVALID
    if args.validate_only:
        print(f"configuration valid: {len(cfg.channels)} channel(s)")
        return EXIT_OK
    if args.scenario is None:
        _err("run needs --scenario: the facility the engine provisions against")
        return EXIT_INVALID
    try:
        scenario = load_scenario(args.scenario)
    except ConfigParseError as exc:
        _err("scenario errors:", *(f"  {line}" for line in str(exc).splitlines()))
        return EXIT_INVALID

    archive_dir = Path(args.archive_dir) if args.archive_dir else cfg.archive_dir
    out = Path(args.out)
    if cfg.mode == "live":
        return _run_live(cfg, scenario, out, archive_dir, args)
    try:
        report = run_scenario(scenario, cfg, out, archive_dir=archive_dir, duration=args.duration)
    except ScenarioTimeout as exc:
        print(exc.report.summary())
        path = _write_report(exc.report, out)
        _err(f"timeout: {exc}", f"residue: {json.dumps(exc.residue, sort_keys=True)}", f"report: {path}")
        return EXIT_RUNTIME
    except EngineError as exc:
        _err(f"runtime failure: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    print(report.summary())
    print(f"report          {_write_report(report, out)}")
    return EXIT_OK


def _run_live(cfg, scenario, out: Path, archive_dir: Path, args: argparse.Namespace) -> int:
    from .service import LiveRun

    try:
        live = LiveRun(cfg, scenario, out, archive_dir, args.socket, speed=args.speed)
    except EngineError as exc:
        _err(f"runtime failure: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    live.start()
    print(f"engine running; control socket {live.socket_path}")
    try:
        live.wait(args.duration)
    except KeyboardInterrupt:
        pass
    report = live.stop()
    print(report.summary())
    print(f"report          {_write_report(report, out)}")
    return EXIT_OK if report.outcome == "completed" else EXIT_RUNTIME


# -- inspect -------------------------------------------------------------------


def _short(value: Any, width: int) -> str:
    text = json.dumps(value, sort_keys=True, separators=(",", ":"))
    if width and len(text) > width:
        return text[: width - 3] + "..."
    return text


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines)


def cmd_inspect(args: argparse.Namespace) -> int:
    path = Path(args.archive)
    if path.is_dir():
        path = path / f"{args.channel}.jsonl"
    if not path.exists():
        _err(f"no archive for channel {args.channel!r} at {path}")
        return EXIT_LOOKUP
    records = [r for r in read_archive(path) if r.channel == args.channel]
    width = 0 if args.full else 72

    if args.generation is not None:
        match = [r for r in records if r.generation == args.generation]
        if not match:
            _err(f"generation not found: {args.generation}")
            return EXIT_LOOKUP
        rec = match[0]
        print(f"channel {rec.channel}  generation {rec.generation}  outcome {rec.outcome}")
        print(f"started {rec.started_at}  ended {rec.ended_at}")
        rows = []
        for name in sorted(rec.products):
            p = rec.products[name]
            rows.append(
                [
                    name,
                    p.produced_by,
                    str(p.generation),
                    f"{p.origin['channel']}#{p.origin['generation']}" if p.origin else "-",
                    _short(p.value, width),
                ]
            )
        print(_table(["product", "produced_by", "source_gen", "origin", "value"], rows))
        return EXIT_OK

    if args.product is not None:
        rows = []
        for rec in records:
            p = rec.products.get(args.product)
            if p is None:
                continue
            value = p.value
            if args.product == "inference_result":
                rows.append(
                    [
                        str(rec.generation),
                        rec.outcome,
                        ",".join(value.get("fired_rules", [])) or "-",
                        ",".join(value.get("publishers_to_run", [])) or "-",
                    ]
                )
            else:
                rows.append([str(rec.generation), rec.outcome, p.produced_by, _short(value, width)])
        if not rows:
            _err(f"product not found: {args.product}")
            return EXIT_LOOKUP
        headers = (
            ["generation", "outcome", "fired_rules", "publishers"]
            if args.product == "inference_result"
            else ["generation", "outcome", "produced_by", "value"]
        )
        print(_table(headers, rows))
        return EXIT_OK

    rows = [
        [str(r.generation), r.outcome, r.started_at, str(len(r.products))]
        for r in records
    ]
    print(_table(["generation", "outcome", "started_at", "products"], rows))
    return EXIT_OK


# -- channel -------------------------------------------------------------------


def _print_status(s: dict[str, Any]) -> None:
    print(f"{s['channel']}: {s['state']}  cycles {s['cycles']}  generation {s['generation']}")
    last = s.get("last_outcome")
    if last:
        fired = ",".join(last["fired_rules"]) or "-"
        print(f"  last cycle {last['generation']}: {last['outcome']}  fired {fired}")
        if last.get("error"):
            print(f"  error: {last['error']}")
    if s.get("unsatisfied_sources") and s["state"] == "boot":
        print("  waiting for: " + ", ".join(s["unsatisfied_sources"]))


def cmd_channel(args: argparse.Namespace) -> int:
    import httpx

    from .service.client import ControlClient, ControlError

    try:
        cfg = load_config(args.config)
    except ConfigParseError as exc:
        _err(str(exc))
        return EXIT_INVALID
    if args.channel_id not in {c.channel_id for c in cfg.channels}:
        _err(f"unknown channel {args.channel_id!r}")
        return EXIT_LOOKUP
    socket_path = Path(args.socket) if args.socket else cfg.control_socket
    try:
        with ControlClient(socket_path) as client:
            if args.action == "status":
                _print_status(client.status(args.channel_id))
            elif args.action == "up":
                print(f"{args.channel_id}: {client.up(args.channel_id)['state']}")
            else:
                print(f"{args.channel_id}: {client.down(args.channel_id, args.grace)['state']}")
    except ControlError as exc:
        _err(exc.detail)
        return EXIT_LOOKUP if exc.status == 404 else EXIT_RUNTIME
    except httpx.TransportError as exc:
        _err(f"cannot reach engine at {socket_path}: {exc}")
        return EXIT_LOOKUP
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decision-engine", description="Rule-driven resource provisioning engine with a simulated facility.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="validate a configuration and run it against a scenario")
    run.add_argument("--config", required=True)
    run.add_argument("--scenario")
    run.add_argument("--duration", type=float, help="override the scenario duration (seconds)")
    run.add_argument("--archive-dir", help="override [engine] archive_dir")
    run.add_argument("--out", default=".", help="directory for report.json and metrics (default: .)")
    run.add_argument("--validate-only", action="store_true")
    run.add_argument("--socket", help="control socket path in live mode")
    run.add_argument("--speed", type=float, default=1.0, help="live mode: sim seconds per wall second")
    run.set_defaults(func=cmd_run)

    inspect = sub.add_parser("inspect", help="show archived cycles")
    inspect.add_argument("--archive", required=True, help="archive directory or channel .jsonl file")
    inspect.add_argument("--channel", required=True)
    which = inspect.add_mutually_exclusive_group()
    which.add_argument("--generation", type=int)
    which.add_argument("--product")
    inspect.add_argument("--full", action="store_true", help="do not truncate values")
    inspect.set_defaults(func=cmd_inspect)

    channel = sub.add_parser("channel", help="control a channel of a running engine")
    channel.add_argument("--config", required=True)
    channel.add_argument("--socket")
    channel.add_argument("--grace", type=float)
    channel.add_argument("action", choices=["up", "down", "status"])
    channel.add_argument("channel_id")
    channel.set_defaults(func=cmd_channel)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
