"""Command-line entry point: ``ragsql <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import CONFIG_ENV, KB_ENV, EngineConfig
from .engine import Engine
from .errors import NoContext, ProviderError, RagSqlError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_CONTEXT = 2
EXIT_PROVIDER = 3

DEFAULT_TRACE = "trace.json"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ragsql", description="Retrieval-augmented text-to-SQL over a local knowledge base.")
    parser.add_argument("--kb", help=f"knowledge-base directory (default: ${KB_ENV} or ./kb)")
    parser.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    parser.add_argument("--fixtures", help="directory of recorded model responses for the offline model")
    parser.add_argument("--offline", action="store_true", help="use only the deterministic local providers")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-docs", help="ingest table documentation (directory or file)")
    p.add_argument("path")
    p.add_argument("--replace", action="store_true", help="retrain tables that are already in the KB")

    p = sub.add_parser("train-examples", help="ingest question/SQL pairs (JSON or JSON lines)")
    p.add_argument("path")
    p.add_argument("--replace", action="store_true", help="retrain examples that are already in the KB")
    p.add_argument("--no-instructions", action="store_true", help="skip deriving domain instructions")

    p = sub.add_parser("train-schema", help="describe and ingest tables from a DDL or JSON schema file")
    p.add_argument("path")
    p.add_argument("--domain-hint")
    p.add_argument("--replace", action="store_true")

    sub.add_parser("calibrate", help="derive retrieval thresholds from the stored examples")

    p = sub.add_parser("ask", help="generate SQL for a question")
    p.add_argument("question")
    p.add_argument("--explain", nargs="?", const=DEFAULT_TRACE, metavar="PATH", help="write the retrieval trace")
    p.add_argument("--json", action="store_true", help="print the full result record")
    p.add_argument("--offline", action="store_true", default=argparse.SUPPRESS)

    p = sub.add_parser("inspect", help="show a stored table document")
    p.add_argument("table")
    return parser


def _load_config(args: argparse.Namespace) -> EngineConfig:
    config = EngineConfig.load(args.config, kb_path=args.kb)
    if args.offline:
        config.offline = True
    if args.fixtures:
        config.llm = {**config.llm, "fixtures": args.fixtures}
    return config


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False)


def run(args: argparse.Namespace, engine: Engine) -> int:
    cmd = args.command
    if cmd == "train-docs":
        summary = engine.train_docs(args.path, replace=args.replace)
    elif cmd == "train-examples":
        summary = engine.train_examples(args.path, replace=args.replace, derive_instructions=not args.no_instructions)
    elif cmd == "train-schema":
        summary = engine.train_schema(args.path, domain_hint=args.domain_hint, replace=args.replace)
    elif cmd == "calibrate":
        profile = engine.calibrate()
        print(_dump({k: v for k, v in profile.__dict__.items()}))
        return EXIT_OK
    elif cmd == "inspect":
        print(_dump(engine.inspect(args.table)))
        return EXIT_OK
    else:
        result = engine.ask(args.question)
        if args.explain:
            Path(args.explain).write_text(_dump(result.trace) + "\n", encoding="utf-8")
        if args.json:
            record = result.to_record()
            record["trace"] = args.explain
            print(_dump(record))
        else:
            print(result.generated.sql)
        return EXIT_OK
    print(_dump(summary.to_record()))
    return EXIT_OK


def main(argv: list[str] | None = None, *, engine: Engine | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        engine = engine or Engine(_load_config(args))
        return run(args, engine)
    except NoContext as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONTEXT
    except ProviderError as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (RagSqlError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
