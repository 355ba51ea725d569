"""Run-directory orchestration shared by the CLI, scripts and tests.

A run directory holds::

    manifest.json          config snapshot, artifact paths, checksums, timings
    config.txt             flat key=value snapshot (re-parses to the same config)
    seed.pairs             oracle-labelled seed preference pairs
    checkpoints/           base.ckpt, iter0.ckpt, iter1.ckpt, ...
    datasets/              iter1.pairs, iter2.pairs, ... (training set per iteration)
    losses/                per-model training loss logs (step,loss)
    metrics.csv            one row per model
    metrics.svg            reward, ranking accuracy and diversity against iteration
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, as_dict, parse_config, snapshot
from .denoiser import DenoiserModel, pretrain_base
from .errors import ArtifactIOError, ConfigError
from .evalkit import emit_metrics, lineage_metrics, metrics_svg
from .pairs import PreferenceDataset, atomic_write, load_pairs, save_pairs
from .prefdata import build_seed_dataset, make_oracle, make_pretrain_data
from .sailoop import _SEED_DATA, ModelLineage, SailResult, phase_rng, run_sail

log = logging.getLogger(__name__)

_PRETRAIN_DATA = 10


@dataclass
class RunManifest:
    config: dict
    paths: dict = field(default_factory=dict)
    checksums: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(
            {"version": self.version, "config": self.config, "paths": self.paths,
             "checksums": self.checksums, "timings": self.timings},
            indent=2, sort_keys=True,
        ) + "\n"

    def write(self, run_dir: Path):
        missing = [p for p in self.paths.values() if not (run_dir / p).exists()]
        if missing:
            raise ArtifactIOError(f"manifest references missing files: {missing}")
        atomic_write(run_dir / "manifest.json", self.to_json())


class _Timer:
    def __init__(self, timings: dict, phase: str):
        self.timings, self.phase = timings, phase

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.timings[self.phase] = round(time.perf_counter() - self.t0, 3)


def write_losses(path, losses):
    rows = ["step,loss"]
    for i, v in enumerate(losses, start=1):
        step, value = v if isinstance(v, tuple) else (i, v)
        rows.append(f"{step},{float(value):.17g}")
    atomic_write(path, "\n".join(rows) + "\n")


def read_losses(path) -> list:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()[1:]
    except OSError as exc:
        raise ArtifactIOError(f"cannot read loss log {path}: {exc}") from exc
    return [float(line.split(",")[1]) for line in lines if line]


def pretrain(cfg: RunConfig):
    """Fit the base model on the two-mode task data. Returns ``(model, losses)``."""
    data = make_pretrain_data(cfg.task, phase_rng(cfg.rng_seed, _PRETRAIN_DATA))
    return pretrain_base(
        data,
        cfg.schedule.build(),
        cfg.pretrain.optimizer(),
        cfg.rng_seed,
        arch=cfg.arch(),
        cond_dropout=cfg.pretrain.cond_dropout,
        loss_threshold=cfg.pretrain.loss_threshold,
    )


def run_pretrain(cfg: RunConfig, out_dir) -> DenoiserModel:
    out = Path(out_dir)
    timings = {}
    with _Timer(timings, "pretrain"):
        model, losses = pretrain(cfg)
    save_checkpoint(model, out / "checkpoints" / "base.ckpt")
    write_losses(out / "losses" / "pretrain.csv", losses)
    atomic_write(out / "config.txt", snapshot(cfg))
    paths = {"config": "config.txt", "base": "checkpoints/base.ckpt", "pretrain_loss": "losses/pretrain.csv"}
    RunManifest(as_dict(cfg), paths, {"base": model.checksum()}, timings).write(out)
    return model


def seed_dataset(cfg: RunConfig, base, oracle=None) -> PreferenceDataset:
    oracle = oracle or make_oracle(cfg.task)
    return build_seed_dataset(
        oracle,
        base,
        range(cfg.task.vocab_size),
        cfg.sail.seed_pairs_per_prompt,
        cfg.schedule.build(),
        cfg.sail.sampler,
        phase_rng(cfg.rng_seed, _SEED_DATA),
        cfg.sail.max_retries,
    )


def run_sail_dir(cfg: RunConfig, base: DenoiserModel, out_dir, evaluate: bool = True) -> SailResult:
    """Seed data, iter0, ``T`` self-rewarding iterations, then metrics."""
    out = Path(out_dir)
    if base.arch != cfg.arch():
        raise ConfigError("base checkpoint architecture does not match the configuration", field="model")
    schedule = cfg.schedule.build()
    oracle = make_oracle(cfg.task)
    timings = {}
    atomic_write(out / "config.txt", snapshot(cfg))
    with _Timer(timings, "seed_data"):
        seed = seed_dataset(cfg, base, oracle)
    save_pairs(seed, out / "seed.pairs")
    with _Timer(timings, "sail"):
        result = run_sail(base, seed, cfg.sail, schedule, oracle=oracle, out_dir=out)
    labels = result.lineage.labels()
    for label, losses in result.losses.items():
        write_losses(out / "losses" / f"{label}.csv", losses)
    paths = {"config": "config.txt", "seed_pairs": "seed.pairs"}
    if (out / "losses" / "pretrain.csv").exists():
        paths["pretrain_loss"] = "losses/pretrain.csv"
    paths.update({f"ckpt_{lab}": f"checkpoints/{lab}.ckpt" for lab in labels})
    paths.update({f"loss_{lab}": f"losses/{lab}.csv" for lab in result.losses})
    paths.update({f"pairs_iter{i}": f"datasets/iter{i}.pairs" for i in range(1, cfg.sail.iters + 1)})
    checksums = dict(zip(labels, result.lineage.checksums()))
    checksums["seed_pairs"] = seed.checksum()
    if evaluate:
        with _Timer(timings, "eval"):
            rows = lineage_metrics(result.lineage, oracle, schedule, cfg.sail.beta_dpo, result.losses, cfg.eval,
                                   cfg.sail.sampler)
            emit_metrics(rows, out / "metrics.csv")
            atomic_write(out / "metrics.svg", metrics_svg(rows, labels))
        paths.update({"metrics": "metrics.csv", "plot": "metrics.svg"})
    RunManifest(as_dict(cfg), paths, checksums, timings).write(out)
    return result


def load_run(run_dir):
    """``(config, lineage, losses)`` reconstructed from a run directory."""
    run = Path(run_dir)
    cfg_path = run / "config.txt"
    try:
        cfg = parse_config(cfg_path.read_text(encoding="utf-8"), {}, source=str(cfg_path))
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {cfg_path}: {exc}") from exc

    def ckpt(label):
        path = run / "checkpoints" / f"{label}.ckpt"
        if not path.exists():
            raise ArtifactIOError(f"missing checkpoint {path}")
        return load_checkpoint(path)

    models = [ckpt(f"iter{i}") for i in range(1, cfg.sail.iters + 1)]
    lineage = ModelLineage(ckpt("base"), ckpt("iter0"), models)
    losses = {}
    for label in lineage.labels()[1:]:
        path = run / "losses" / f"{label}.csv"
        if path.exists():
            losses[label] = read_losses(path)
    return cfg, lineage, losses


def run_eval(run_dir, plot: bool = True) -> list:
    """Regenerate metrics (and the plot) deterministically from checkpoints."""
    run = Path(run_dir)
    cfg, lineage, losses = load_run(run)
    rows = lineage_metrics(lineage, make_oracle(cfg.task), cfg.schedule.build(), cfg.sail.beta_dpo, losses, cfg.eval,
                           cfg.sail.sampler)
    emit_metrics(rows, run / "metrics.csv")
    if plot:
        atomic_write(run / "metrics.svg", metrics_svg(rows, lineage.labels()))
    return rows


def load_seed(run_dir) -> PreferenceDataset:
    return load_pairs(Path(run_dir) / "seed.pairs")
