"""Command line entry point.

One subcommand, export: read a users file (texts, no embeddings), embed
every tweet and mapping string at a frozen encoder's [CLS] position, and
write the dataset file the classifier trains on. Exit codes: 0 success,
1 domain or I/O failure (one line on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

from hankit.errors import HankitError

from .exporter import DEFAULT_MODEL, ExportError, ExportJob, export


def cmd_export(args) -> int:
    job = ExportJob(
        input_path=args.infile,
        output_path=args.out,
        model=args.model,
        batch_size=args.batch,
    )
    report = export(job)
    if report.truncated:
        print(
            f"warning: {report.truncated} texts exceeded the encoder maximum and were truncated",
            file=sys.stderr,
        )
    print(
        f"embedded {report.texts} texts ({report.unique_texts} distinct) over "
        f"{report.users} users (d={report.d}) -> {args.out}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedkit",
        description="Export [CLS] sentence embeddings into the classifier dataset format.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="embed a users file into a dataset file")
    p.add_argument("--in", dest="infile", required=True, help="users JSONL (texts, no embeddings)")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument(
        "--model",
        default=DEFAULT_MODEL,
        help=f"encoder name or local directory (default {DEFAULT_MODEL})",
    )
    p.add_argument("--batch", type=int, default=32, help="texts per inference batch (default 32)")
    p.set_defaults(func=cmd_export)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return int(args.func(args) or 0)
    except (ExportError, HankitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(run(sys.argv[1:]))
