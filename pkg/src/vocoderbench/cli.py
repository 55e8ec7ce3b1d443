"""Command-line entry point: ``vocoderbench extract|train|synthesize|normalize|report``.

Exit codes: 0 success, 1 partial failure, 2 usage or configuration error.
Logs are one JSON object per line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from .config import METHODS, ConfigError, ExperimentConfig, hidden_defaults, write_default_config
from .corpus import ManifestError, make_toy_corpus

_STD_ATTRS = set(vars(logging.LogRecord("", 0, "", 0, "", None, None))) | {"message", "asctime"}


class JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        out = {"time": round(record.created, 3), "level": record.levelname.lower(),
               "logger": record.name, "msg": record.getMessage()}
        for k, v in vars(record).items():
            if k not in _STD_ATTRS:
                out[k] = v
        if record.exc_info:
            out["exception"] = self.formatException(record.exc_info)
        return json.dumps(out, default=str)


def setup_logging(level=logging.INFO) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())
    root = logging.getLogger("vocoderbench")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        logging.getLogger("vocoderbench").error("usage error", extra={"detail": message})
        self.print_usage(sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vocoderbench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("extract", "train", "synthesize", "normalize", "report"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True)
        s.add_argument("--method", action="append", help="restrict to these methods (repeatable)")
        s.add_argument("--workers", type=int)
        s.add_argument("--seed", type=int)
        if name in ("synthesize", "report"):
            s.add_argument("--ids", nargs="*", help="utterance ids (default: configured split)")
        if name == "normalize":
            s.add_argument("paths", nargs="*", help="WAV files (default: all synthesized WAVs)")
    t = sub.add_parser("make-toy", help="write a synthetic corpus and a complete config")
    t.add_argument("--out", required=True)
    t.add_argument("--utterances", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    return p


def _run(args) -> int:
    from . import pipeline  # heavy imports only once arguments are valid

    log = logging.getLogger("vocoderbench")
    if args.command == "make-toy":
        from pathlib import Path
        out = Path(args.out)
        make_toy_corpus(out / "corpus", args.utterances, seed=args.seed)
        path = write_default_config(out / "config.toml", seed=args.seed)
        log.info("toy corpus written", extra={"config": str(path)})
        return 0

    cfg = ExperimentConfig.load(args.config).with_overrides(args.seed, args.workers)
    missing = hidden_defaults(cfg.file_values)
    if missing:
        log.warning("config relies on defaults", extra={"keys": missing})
    methods = args.method or None
    if methods:
        bad = [m for m in methods if m not in METHODS]
        if bad:
            log.error("usage error", extra={"detail": f"unknown method(s) {bad}; expected {list(METHODS)}"})
            return 2
    t0 = time.time()
    if args.command == "extract":
        code = pipeline.cmd_extract(cfg).exit_code
    elif args.command == "train":
        pipeline.cmd_train(cfg, methods)
        code = 0
    elif args.command == "synthesize":
        code = pipeline.cmd_synthesize(cfg, methods, args.ids).exit_code
    elif args.command == "normalize":
        code = pipeline.cmd_normalize(cfg, args.paths).exit_code
    else:
        if methods:
            cfg.values["methods"] = methods
        pipeline.cmd_report(cfg, args.ids)
        code = 0
    log.info("done", extra={"command": args.command, "exit_code": code, "seconds": round(time.time() - t0, 2)})
    return code


def main(argv=None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    log = logging.getLogger("vocoderbench")
    try:
        return _run(args)
    except (ConfigError, ManifestError) as exc:
        log.error("configuration error", extra={"detail": str(exc)})
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a failed run
        from .pipeline import PipelineError
        if isinstance(exc, PipelineError):
            log.error("pipeline error", extra={"detail": str(exc)})
            return 1
        raise


if __name__ == "__main__":
    sys.exit(main())
