"""Command-line entry point: ``dialogic <subcommand> [options]``.

Exit codes: 0 success (possibly with per-item warnings), 1 usage or
configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from dialogic import pipeline
from dialogic.config import ConfigError, PipelineConfig
from dialogic.errors import BackendUnreachable, DialogicError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

logger = logging.getLogger("dialogic")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--out", help="output root directory (overrides the config)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config entry, e.g. --set train.max_epochs=10")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="dialogic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("vad", parents=[common], help="segment every WAV in the audio directory")
    p.add_argument("--audio-dir")

    p = sub.add_parser("transcribe", parents=[common], help="transcribe segment files")
    p.add_argument("--audio-dir", help="recordings to cut segments from (remote mode)")
    p.add_argument("--mode", choices=["offline", "remote"])
    p.add_argument("--endpoint")
    p.add_argument("--transcripts")

    sub.add_parser("gen-data", parents=[common], help="write six synthetic datasets")
    sub.add_parser("train-embeddings", parents=[common], help="train skip-gram embeddings")
    sub.add_parser("train", parents=[common], help="train LSTM and baseline classifiers")
    sub.add_parser("evaluate", parents=[common], help="write AUC table and ROC plots")

    p = sub.add_parser("predict", parents=[common], help="tag sentences with instruction types")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text", action="append", help="sentence to tag (repeatable)")
    src.add_argument("--input", help="utterance file (JSON lines) to tag")
    p.add_argument("--threshold", type=float, help="one threshold for all types")
    p.add_argument("--output", help="write JSON lines here instead of stdout")

    p = sub.add_parser("e2e", parents=[common], help="recording to instruction timeline")
    p.add_argument("--audio", required=True, help="WAV recording")
    p.add_argument("--mode", choices=["offline", "remote"])
    p.add_argument("--endpoint")
    p.add_argument("--transcripts")
    p.add_argument("--threshold", type=float)
    p.add_argument("--output")

    sub.add_parser("gradcheck", parents=[common], help="finite-difference check of BPTT")
    return parser


def _configure(args) -> PipelineConfig:
    overrides = list(args.set)
    for flag, key in (("audio_dir", "paths.audio_dir"), ("transcripts", "paths.transcripts")):
        value = getattr(args, flag, None)
        if value:
            overrides.append(f"{key}={json.dumps(value)}")
    return PipelineConfig.load(args.config, overrides, seed=args.seed, out=args.out)


def _emit(records, output):
    text = "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records)
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(args) -> int:
    cfg = _configure(args)
    cmd = args.command
    if cmd == "vad":
        for path in pipeline.run_vad(cfg):
            print(path)
    elif cmd == "transcribe":
        asr = cfg.asr(args.mode, args.endpoint)
        for path in pipeline.run_transcribe(cfg, asr):
            print(path)
    elif cmd == "gen-data":
        for path in pipeline.run_gen_data(cfg):
            print(path)
    elif cmd == "train-embeddings":
        print(pipeline.run_train_embeddings(cfg))
    elif cmd == "train":
        for path in pipeline.run_train(cfg):
            print(path)
    elif cmd == "evaluate":
        report = pipeline.run_evaluate(cfg)
        for e in report.entries:
            print(f"{e.score.instruction.value:14s} {e.score.model:7s} {e.score.value:.4f}")
    elif cmd == "predict":
        records = pipeline.run_predict(cfg, args.text, args.input, args.threshold)
        _emit(records, args.output)
    elif cmd == "e2e":
        asr = cfg.asr(args.mode, args.endpoint)
        print(pipeline.run_e2e(cfg, args.audio, asr, args.threshold, args.output))
    elif cmd == "gradcheck":
        errors = pipeline.run_gradcheck(cfg)
        worst = max(errors)
        tol = float(cfg.section("gradcheck")["tolerance"])
        print(f"instances={len(errors)} max_relative_error={worst:.3e}")
        return EXIT_OK if worst < tol else EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (ConfigError, pipeline.InputError) as exc:
        print(f"dialogic: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BackendUnreachable, DialogicError, OSError, ValueError) as exc:
        print(f"dialogic: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
