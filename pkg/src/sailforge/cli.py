"""Command-line entry point: ``sailforge {pretrain,sail,eval,verify}``.

Exit codes: 0 success, 1 other pipeline error, 2 configuration error,
3 numeric error, 4 I/O error, 5 failed verification.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .checkpoint import load_checkpoint
from .config import RunConfig, load_config, parse_config, set_value
from .errors import SailError
from .pairs import atomic_write
from .pipeline import run_eval, run_pretrain, run_sail_dir
from .verify import format_report, oracle_battery

log = logging.getLogger("sailforge")

EXIT_VERIFY_FAILED = 5
_STRATEGY = {"best-worst": "best_worst", "random": "random"}
# "iter0" names the fixed anchor used for every iteration; it is the pretrained base
_RANKING_REF = {"iter0": "base", "base": "base", "previous": "previous"}


def _config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        env = dict(os.environ)
        seed = args.seed if args.seed is not None else 0
        cfg = parse_config(f"rng_seed={seed}\n", env, source="<defaults>")
    if args.seed is not None:
        set_value(cfg, "rng_seed", args.seed)
    return cfg


def _apply_sail_flags(cfg: RunConfig, args) -> RunConfig:
    if args.no_mixup:
        set_value(cfg, "sail.mixup_enabled", False)
    if args.strategy:
        set_value(cfg, "sail.selection_strategy", _STRATEGY[args.strategy])
    if args.ranking_ref:
        set_value(cfg, "sail.ranking_reference", _RANKING_REF[args.ranking_ref])
    if args.alpha is not None:
        set_value(cfg, "sail.alpha_mix", args.alpha)
    if args.reward_source:
        set_value(cfg, "sail.reward_source", args.reward_source)
    if args.iters is not None:
        sizes = list(cfg.sail.prompts_per_iter)
        sizes = (sizes + [sizes[-1]] * args.iters)[: args.iters]
        set_value(cfg, "sail.prompts_per_iter", tuple(sizes))
    return cfg


def cmd_pretrain(args) -> int:
    cfg = _config(args)
    if args.steps is not None:
        set_value(cfg, "pretrain.steps", args.steps)
    out = Path(args.out)
    model = run_pretrain(cfg, out)
    print(f"base checkpoint {out / 'checkpoints' / 'base.ckpt'} ({model.checksum()[:12]})")
    return 0


def cmd_sail(args) -> int:
    cfg = _apply_sail_flags(_config(args), args)
    out = Path(args.out)
    if args.base:
        base = load_checkpoint(args.base)
    else:
        log.info("no --base given; pretraining a base model first")
        base = run_pretrain(cfg, out)
    result = run_sail_dir(cfg, base, out, evaluate=not args.no_eval)
    print(f"run directory {out}: {len(result.lineage)} models")
    if not args.no_eval:
        print((out / "metrics.csv").read_text(), end="")
    return 0


def cmd_eval(args) -> int:
    rows = run_eval(args.run_dir, plot=not args.no_plot)
    print(f"{len(rows)} metrics rows written to {Path(args.run_dir) / 'metrics.csv'}")
    return 0


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else 0
    reports = oracle_battery(seed)
    text = format_report(reports)
    if args.out:
        atomic_write(args.out, text)
    print(text, end="")
    return 0 if all(r.passed for r in reports) else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value configuration file")
    common.add_argument("--seed", type=int, help="override rng_seed (also SAILFORGE_SEED)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sailforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("pretrain", parents=[common], help="fit the base denoiser")
    pre.add_argument("--out", required=True, help="run directory")
    pre.add_argument("--steps", type=int, help="override pretrain.steps")
    pre.set_defaults(func=cmd_pretrain)

    sail = sub.add_parser("sail", parents=[common], help="seed DPO plus self-rewarding iterations")
    sail.add_argument("--out", required=True, help="run directory")
    sail.add_argument("--base", help="base checkpoint; pretrained in the run directory when omitted")
    sail.add_argument("--no-mixup", action="store_true", help="train on generated pairs only")
    sail.add_argument("--strategy", choices=sorted(_STRATEGY), help="pair selection within a candidate set")
    sail.add_argument("--ranking-ref", choices=sorted(_RANKING_REF), help="reference for self-reward ranking")
    sail.add_argument("--reward-source", choices=["self", "external"], help="rank with self-reward or the oracle")
    sail.add_argument("--alpha", type=float, help="fraction of generated pairs in each training set")
    sail.add_argument("--iters", type=int, help="number of self-rewarding iterations")
    sail.add_argument("--no-eval", action="store_true", help="skip metrics")
    sail.set_defaults(func=cmd_sail)

    ev = sub.add_parser("eval", parents=[common], help="recompute metrics for a run directory")
    ev.add_argument("run_dir")
    ev.add_argument("--no-plot", action="store_true")
    ev.set_defaults(func=cmd_eval)

    ver = sub.add_parser("verify", parents=[common], help="run the independent oracle battery")
    ver.add_argument("--out", help="also write the report here")
    ver.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SailError as exc:
        print(f"error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
