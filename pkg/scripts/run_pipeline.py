"""Pretrain, run the self-rewarding loop, and evaluate, all in one run directory.

    python3 scripts/run_pipeline.py --out runs/default --seed 0
    python3 scripts/run_pipeline.py --out runs/custom --config my.cfg --set sail.alpha_mix=0.5
"""

import argparse
import logging
import time
import warnings
from pathlib import Path

from sailforge.config import RunConfig, load_config, set_value
from sailforge.pipeline import run_pretrain, run_sail_dir


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--config")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override, repeatable")
    ap.add_argument("-q", "--quiet", action="store_true", help="hide small-seed-set mixup warnings")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    if args.quiet:
        warnings.simplefilter("ignore", RuntimeWarning)

    cfg = load_config(args.config) if args.config else RunConfig(rng_seed=args.seed or 0)
    if args.seed is not None:
        set_value(cfg, "rng_seed", args.seed)
    for item in args.set:
        key, _, value = item.partition("=")
        set_value(cfg, key.strip(), value.strip())

    out = Path(args.out)
    t0 = time.perf_counter()
    base = run_pretrain(cfg, out)
    logging.info("pretrained base in %.1fs", time.perf_counter() - t0)
    run_sail_dir(cfg, base, out)
    logging.info("finished in %.1fs", time.perf_counter() - t0)
    print((out / "metrics.csv").read_text(), end="")


if __name__ == "__main__":
    main()
