"""Command-line front end.

Exit codes: 0 success, 1 usage error (bad flags or unknown subcommand),
2 data or validation error (malformed files, failed checks).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checkpoint import CheckpointFormatError
from .config import ConfigError, load_config
from .data import DatasetFormatError, SynthConfig, generate_synthetic, load_dataset
from .decoding import decode_utterance
from .gradsuite import run_suite
from .teacher import AlignmentError, EmbeddingFormatError, load_embedding_file
from .train import evaluate, load_model_for_eval, sweep, train_run

USAGE_EXIT = 1
DATA_EXIT = 2

DATA_ERRORS = (ConfigError, DatasetFormatError, EmbeddingFormatError,
               AlignmentError, CheckpointFormatError, FileNotFoundError,
               ValueError)


def _add_config_args(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field (repeatable)")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="cifkd",
        description="Integrate-and-fire speech recognizer with "
                    "teacher-embedding distillation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int, default=20)
    p.add_argument("--train", type=int, default=50)
    p.add_argument("--dev", type=int, default=16)
    p.add_argument("--test", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mu", type=float, default=8.0)
    p.add_argument("--min-tokens", type=int, default=3)
    p.add_argument("--max-tokens", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--jitter", type=float, default=0.25)
    p.add_argument("--silence-frames", type=int, default=8)

    p = sub.add_parser("export-check",
                       help="validate an embedding file against a dataset")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--dim", type=int, default=None)

    p = sub.add_parser("train", help="run training from a config")
    _add_config_args(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_config_args(p)
    p.add_argument("--ckpt", help="checkpoint path (default <out_dir>/best.ckpt)")
    p.add_argument("--splits", default="dev,test")

    p = sub.add_parser("decode", help="write hypothesis transcripts")
    _add_config_args(p)
    p.add_argument("--ckpt")
    p.add_argument("--input", required=True, help="dataset directory")
    p.add_argument("--split", default="test")
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--output", default="-", help="file path or - for stdout")

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sweep", help="temperature/negative-count grid")
    _add_config_args(p)
    p.add_argument("--taus", required=True, help="comma-separated temperatures")
    p.add_argument("--ks", required=True, help="comma-separated negative counts")
    p.add_argument("--out", required=True, help="results CSV path")
    return parser


def _cmd_gen_data(args):
    cfg = SynthConfig(vocab_size=args.vocab_size, n_train=args.train,
                      n_dev=args.dev, n_test=args.test, seed=args.seed,
                      mu=args.mu, min_tokens=args.min_tokens,
                      max_tokens=args.max_tokens, noise=args.noise,
                      jitter=args.jitter, silence_frames=args.silence_frames)
    out = generate_synthetic(args.out, cfg)
    print(f"wrote {args.train}+{args.dev}+{args.test} utterances to {out}")
    return 0


def _cmd_export_check(args):
    from .teacher import align_check
    store = load_embedding_file(args.embeddings, expect_dim=args.dim)
    dataset = load_dataset(args.data, args.split)
    for utt in dataset:
        align_check(store.get(utt.utt_id), len(utt.tokens))
    print(f"ok: {len(dataset)} records aligned "
          f"({store.dim}-dim embeddings, split {args.split})")
    return 0


def _cmd_train(args):
    cfg = load_config(args.config, args.set)
    result, _, _ = train_run(cfg)
    print(f"finished {result.epochs_run} epochs; "
          f"best dev CER {result.best_dev_cer:.4f}; "
          f"metrics at {result.metrics_path}")
    return 0


def _resolve_ckpt(args, cfg):
    if args.ckpt:
        return args.ckpt
    return Path(cfg.out_dir) / "best.ckpt"


def _cmd_eval(args):
    cfg = load_config(args.config, args.set)
    model, _ = load_model_for_eval(_resolve_ckpt(args, cfg), cfg)
    for split in args.splits.split(","):
        split = split.strip()
        dataset = load_dataset(cfg.data_dir, split)
        cer = evaluate(model, dataset, beam_size=cfg.beam_size,
                       length_normalize=cfg.length_normalize)
        print(f"{split} CER {cer:.4f} ({len(dataset)} utterances)")
    return 0


def _cmd_decode(args):
    cfg = load_config(args.config, args.set)
    model, _ = load_model_for_eval(_resolve_ckpt(args, cfg), cfg)
    dataset = load_dataset(args.input, args.split)
    beam = args.beam if args.beam is not None else cfg.beam_size
    lines = []
    for utt in dataset:
        hyp = decode_utterance(model, utt.features, beam_size=beam,
                               length_normalize=cfg.length_normalize)
        lines.append(f"{utt.utt_id}\t{' '.join(str(t) for t in hyp)}")
    text = "\n".join(lines) + "\n"
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {len(lines)} hypotheses to {args.output}")
    return 0


def _cmd_gradcheck(args):
    failures = 0
    for name, report in run_suite(tol=args.tol, seed=args.seed):
        verdict = "PASS" if report.passed else "FAIL"
        print(f"{verdict} {name}: max rel err {report.max_rel_err:.3e} "
              f"over {report.n_elements} elements (tol {report.tol:.1e})")
        failures += 0 if report.passed else 1
    if failures:
        print(f"{failures} check(s) failed")
        return DATA_EXIT
    print("all gradient checks passed")
    return 0


def _cmd_sweep(args):
    cfg = load_config(args.config, args.set)
    taus = [float(t) for t in args.taus.split(",") if t.strip()]
    ks = [int(k) for k in args.ks.split(",") if k.strip()]
    if not taus or not ks:
        raise ConfigError("sweep needs at least one temperature and one K")
    out = sweep(cfg, taus, ks, args.out)
    print(f"wrote {len(taus) * len(ks)} sweep rows to {out}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "export-check": _cmd_export_check,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "decode": _cmd_decode,
    "gradcheck": _cmd_gradcheck,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems and 0 for --help
        return 0 if exc.code == 0 else USAGE_EXIT
    try:
        return _COMMANDS[args.command](args)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
