"""Command-line entry point: one command per pipeline stage plus ``run-all``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .canon import digest, pretty_json
from .chain_model import load_chains
from .errors import (
    ArtifactExists,
    BackendError,
    ChainFormatError,
    CorruptArtifact,
    EmptyInput,
    EmptyTranscript,
    FormatError,
    MalformedOutput,
    MissingStage,
    UnmappedQuestion,
)
from .pipeline import Pipeline, PipelineConfig, UsageError, bundled_corpus, corpus_files, new_run_id
from .relation_parser import ParseError
from .stats import composition_summary
from .store import STAGES
from .validator import validate_chain

EXIT_OK, EXIT_BACKEND, EXIT_VALIDATION, EXIT_USAGE = 0, 1, 2, 3

log = logging.getLogger("peel")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 3 rather than argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _run_flags(p: argparse.ArgumentParser, run_id_required: bool = True) -> None:
    p.add_argument("--config", type=Path, help="JSON config file (backends, paths, seed)")
    p.add_argument("--run-id", required=run_id_required, help="run directory name under <out>/runs")
    p.add_argument("--topic", action="append", default=None, help="restrict pairing to this topic id or label (repeatable)")
    p.add_argument("--mock", action="store_true", help="answer from a scripted mock instead of live models")
    p.add_argument("--script", type=Path, help="mock script file (required with --mock)")
    p.add_argument("--seed", type=int, help="seed for scripted choices in mock mode")
    p.add_argument("--parallel", type=int, help="maximum concurrent tasks")
    p.add_argument("--cache-dir", type=Path, help="content-addressed task cache (default <out>/cache)")
    p.add_argument("--out", type=Path, help="output root (default ./out)")
    p.add_argument("--themes", type=Path, help="question_id,theme CSV for the aggregate stage")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="peel", description="Extract reasoning chains from debates and locate root divergences.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="read transcripts into a new or existing run")
    p.add_argument("transcripts", nargs="+", type=Path, help=".jsonl or SPEAKER:-prefixed .txt files")
    p.add_argument("--speakers", type=Path, help="episode,name,profession,gender CSV")
    _run_flags(p, run_id_required=False)

    for stage, text in (
        ("segment", "split transcripts into topical segments"),
        ("summarize", "summarize each guest speaker"),
        ("extract", "extract reasoning chains from summaries"),
        ("classify", "assign topic and attitude to each conclusion"),
        ("pairs", "enumerate optimist/pessimist chain pairs per topic"),
        ("disagree", "find divergences and the root divergence per pair"),
        ("aggregate", "map causal root divergences onto causal questions"),
        ("report", "emit JSON and CSV tables"),
    ):
        _run_flags(sub.add_parser(stage, help=text))

    p = sub.add_parser("stats", help="compute statistics for a run, or for a chains directory")
    p.add_argument("--chains", type=Path, help="chains file or directory; prints a composition table and exits")
    _run_flags(p, run_id_required=False)

    p = sub.add_parser("run-all", help="ingest a corpus and run every stage")
    p.add_argument("--corpus", type=Path, help="corpus directory (default: the bundled mini-corpus)")
    _run_flags(p, run_id_required=False)

    p = sub.add_parser("validate", help="check chain files for structural problems")
    p.add_argument("chains", nargs="+", type=Path)

    sub.add_parser("bundled", help="print the bundled mini-corpus directory and mock script")
    return parser


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    over = {}
    if args.mock:
        over["mock"] = True
    for name in ("script", "seed", "parallel", "cache_dir", "out", "themes"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    if args.topic:
        over["topics"] = tuple(args.topic)
    if getattr(args, "speakers", None) is not None:
        over["speakers"] = args.speakers
    cfg = replace(cfg, **over)
    cfg.validate()
    return cfg


def _default_run_id(cfg: PipelineConfig, inputs: Sequence[Path]) -> str:
    """Mock runs get a content-derived id so repeated runs land in the same place."""
    if cfg.mock:
        h = digest({"config": cfg.digest(), "inputs": [digest(p.read_bytes()) for p in sorted(inputs, key=lambda x: x.name)]})
        return f"mock-{h[:12]}"
    return new_run_id()


def _emit(obj) -> None:
    sys.stdout.write(pretty_json(obj))
    sys.stdout.flush()


def cmd_ingest(args) -> int:
    cfg = _config(args)
    run_id = args.run_id or _default_run_id(cfg, args.transcripts)
    pipe = Pipeline(cfg, run_id)
    pipe.ingest(list(args.transcripts), args.speakers)
    _emit({"run_id": run_id, "run_dir": str(pipe.run_dir), "next": pipe.next_stage()})
    return EXIT_OK


def _existing(cfg: PipelineConfig, run_id: str) -> Pipeline:
    if not (Path(cfg.out) / "runs" / run_id / "manifest.json").exists():
        raise MissingStage(f"run {run_id!r} not found under {cfg.out}; run 'ingest' first")
    return Pipeline(cfg, run_id)


def cmd_stage(args) -> int:
    cfg = _config(args)
    pipe = _existing(cfg, args.run_id)
    pipe.run_stage(args.command)
    _emit({"run_id": args.run_id, "stage": args.command, "next": pipe.next_stage()})
    return EXIT_OK


def cmd_stats(args) -> int:
    if args.chains is not None:
        chains = load_chains(args.chains)
        if not chains:
            raise EmptyInput(f"no chains found in {args.chains}")
        summary = composition_summary(chains)
        _emit(summary.to_dict())
        return EXIT_OK
    if not args.run_id:
        raise UsageError("stats needs --run-id or --chains")
    return cmd_stage(args)


def cmd_run_all(args) -> int:
    corpus = args.corpus or bundled_corpus()
    if not corpus.is_dir():
        raise UsageError(f"corpus directory {corpus} does not exist")
    files = corpus_files(corpus)
    if not files:
        raise UsageError(f"no .jsonl or .txt transcripts in {corpus}")
    if args.mock and args.script is None and args.config is None and (corpus / "mock_script.json").exists():
        args.script = corpus / "mock_script.json"
    if args.themes is None and (corpus / "themes.csv").exists():
        args.themes = corpus / "themes.csv"
    speakers = corpus / "speakers.csv"
    args.speakers = speakers if speakers.exists() else None
    cfg = _config(args)
    run_id = args.run_id or _default_run_id(cfg, files)
    pipe = Pipeline(cfg, run_id)
    pipe.run_all(files, args.speakers)
    _emit({"run_id": run_id, "run_dir": str(pipe.run_dir), "stages": list(STAGES), "next": pipe.next_stage()})
    return EXIT_OK


def cmd_validate(args) -> int:
    reports = []
    for path in args.chains:
        for chain in load_chains(path):
            reports.append(validate_chain(chain))
    _emit([r.to_dict() for r in reports])
    return EXIT_OK if all(r.is_valid for r in reports) else EXIT_VALIDATION


def cmd_bundled(args) -> int:
    root = bundled_corpus()
    _emit({"corpus": str(root), "script": str(root / "mock_script.json")})
    return EXIT_OK


_COMMANDS = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "run-all": cmd_run_all,
    "validate": cmd_validate,
    "bundled": cmd_bundled,
}


def _exit_code(exc: BaseException) -> Optional[int]:
    if isinstance(exc, (BackendError, MalformedOutput)):
        return EXIT_BACKEND
    if isinstance(exc, (UsageError, MissingStage)):
        return EXIT_USAGE
    if isinstance(
        exc,
        (
            ChainFormatError,
            ParseError,
            FormatError,
            EmptyTranscript,
            EmptyInput,
            CorruptArtifact,
            ArtifactExists,
            UnmappedQuestion,
            json.JSONDecodeError,
        ),
    ):
        return EXIT_VALIDATION
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    handler = _COMMANDS.get(args.command, cmd_stage)
    try:
        return handler(args)
    except (OSError, ValueError, KeyError) as exc:
        code = _exit_code(exc)
        if code is None:
            code = EXIT_USAGE if isinstance(exc, (OSError, KeyError)) else EXIT_VALIDATION
        print(f"peel: error: {exc}", file=sys.stderr)
        return code
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code below
        code = _exit_code(exc)
        if code is None:
            raise
        print(f"peel: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
