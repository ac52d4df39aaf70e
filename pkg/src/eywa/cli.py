"""Command-line entry point.

Subcommands: run, score, report, serve-mock, convert.
Exit codes: 0 success, 1 fatal configuration error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from eywa.bench import BenchmarkError, SCHEMA_FIELDS, TaskInstance, save_benchmark
from eywa.harness import (
    HarnessError,
    RunConfig,
    report_table,
    run,
    score_predictions_file,
)
from eywa.server import serve_mock


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eywa")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a system over a benchmark")
    p_run.add_argument("--bench", required=True)
    p_run.add_argument("--system", required=True)
    p_run.add_argument("--registry", required=True)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--repeats", type=int, default=1)
    p_run.add_argument("--out", required=True)

    p_score = sub.add_parser("score", help="score a predictions file")
    p_score.add_argument("--pred", required=True)
    p_score.add_argument("--bench", required=True)
    p_score.add_argument("--out", default=None)

    p_report = sub.add_parser("report", help="format a run report")
    p_report.add_argument("--in", dest="in_path", required=True)
    p_report.add_argument("--csv", action="store_true")

    p_serve = sub.add_parser("serve-mock", help="serve the bundled mock backends")
    p_serve.add_argument("--port", type=int, default=8080)

    p_convert = sub.add_parser("convert", help="convert a CSV benchmark to JSON-Lines")
    p_convert.add_argument("--csv", dest="csv_path", required=True)
    p_convert.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    try:
        config = RunConfig(
            bench_path=args.bench,
            system=args.system,
            registry_path=args.registry,
            workers=args.workers,
            seed=args.seed,
            repeats=args.repeats,
            out_path=args.out,
        )
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        report = run(config)
    except (HarnessError, BenchmarkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    print(report_table(report)[0])
    return 0


def _cmd_score(args) -> int:
    try:
        result = score_predictions_file(args.pred, args.bench)
    except FileNotFoundError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except (BenchmarkError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = json.dumps(result, indent=2, ensure_ascii=False)
    if args.out:
        try:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        except OSError as exc:
            print(f"i/o error: {exc}", file=sys.stderr)
            return 2
    else:
        print(text)
    return 0


def _cmd_report(args) -> int:
    try:
        data = json.loads(Path(args.in_path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: invalid report JSON: {exc}", file=sys.stderr)
        return 1
    table, csv_text = report_table(data)
    print(csv_text if args.csv else table)
    return 0


def _cmd_serve_mock(args) -> int:
    try:
        server = serve_mock(port=args.port)
    except OSError as exc:
        print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
        return 1
    print(f"serving mock backends on {server.base_url}")
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        server.stop()
    return 0


def _cmd_convert(args) -> int:
    try:
        with open(args.csv_path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != SCHEMA_FIELDS:
                print(
                    f"error: CSV header must be exactly {','.join(SCHEMA_FIELDS)}",
                    file=sys.stderr,
                )
                return 1
            instances = []
            for i, row in enumerate(reader):
                try:
                    instances.append(
                        TaskInstance(
                            domain=row["domain"],
                            task=row["task"],
                            description=row["description"],
                            output_size=int(row["output_size"]),
                            input=row["input"],
                            label=row["label"],
                        )
                    )
                except (BenchmarkError, ValueError) as exc:
                    print(f"error: record {i}: {exc}", file=sys.stderr)
                    return 1
    except FileNotFoundError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    try:
        save_benchmark(instances, args.out)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(instances)} instances to {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "score": _cmd_score,
        "report": _cmd_report,
        "serve-mock": _cmd_serve_mock,
        "convert": _cmd_convert,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
