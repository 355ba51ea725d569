"""The closed self-rewarding loop: base -> iter0 (seed DPO) -> M_1 .. M_T.

Iteration ``i`` samples candidates from ``M_{i-1}``, scores them with the
implicit reward of ``M_{i-1}`` against a fixed ranking reference, keeps the
best and worst candidate of each set, mixes those pairs with the seed set,
and runs DPO with a frozen copy of ``M_{i-1}`` as both initial policy and
reference.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .denoiser import DenoiserModel
from .dpo import train_dpo
from .errors import ConfigError, DegenerateSetError, SailError
from .optim import OptimizerConfig
from .pairs import PreferenceDataset, save_pairs
from .prefdata import PromptPool, external_reward_rank, mixup
from .sampler import SamplerConfig, sample_candidate_sets
from .schedule import NoiseSchedule
from .selfreward import make_draws, rank_candidates

log = logging.getLogger(__name__)

STRATEGIES = ("best_worst", "random")
RANKING_REFERENCES = ("base", "previous")
REWARD_SOURCES = ("self", "external")

# stream identifiers for per-phase generators
_SEED_DATA, _ITER0, _PROMPTS, _CANDIDATES, _DRAWS, _SELECT, _MIX, _TRAIN, _EVAL = range(1, 10)


def phase_rng(seed: int, phase: int, iteration: int = 0) -> np.random.Generator:
    """Independent generator per (seed, phase, iteration), so arms sharing a seed stay matched."""
    return np.random.default_rng([int(seed), phase, iteration])


@dataclass
class SailConfig:
    prompts_per_iter: tuple = (100, 200, 200)
    n_candidates: int = 8
    m_draws: int = 10
    alpha_mix: float = 0.75
    selection_strategy: str = "best_worst"
    ranking_reference: str = "base"
    reward_source: str = "self"
    mixup_enabled: bool = True
    target_size: int = 0
    seed_pairs_per_prompt: int = 4
    max_retries: int = 3
    rng_seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    iter0_optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self):
        self.prompts_per_iter = tuple(int(n) for n in self.prompts_per_iter)
        self.validate()

    @property
    def iters(self) -> int:
        return len(self.prompts_per_iter)

    @property
    def beta_dpo(self) -> float:
        return self.optimizer.beta_dpo

    def validate(self):
        if self.n_candidates < 2:
            raise ConfigError("n_candidates must be >= 2", field="n_candidates")
        if self.m_draws < 1:
            raise ConfigError("m_draws must be >= 1", field="m_draws")
        if not 0.0 <= self.alpha_mix <= 1.0:
            raise ConfigError("alpha_mix must lie in [0, 1]", field="alpha_mix")
        if self.mixup_enabled and self.alpha_mix >= 1.0:
            raise ConfigError("alpha_mix must be < 1 when mixup is enabled", field="alpha_mix")
        if any(n < 1 for n in self.prompts_per_iter):
            raise ConfigError("every prompts_per_iter entry must be >= 1", field="prompts_per_iter")
        for name, allowed in (
            ("selection_strategy", STRATEGIES),
            ("ranking_reference", RANKING_REFERENCES),
            ("reward_source", REWARD_SOURCES),
        ):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}", field=name)


@dataclass
class ModelLineage:
    base: DenoiserModel
    iter0: DenoiserModel
    models: list = field(default_factory=list)
    references: list = field(default_factory=list)
    ranking_references: list = field(default_factory=list)

    def __post_init__(self):
        self.check()

    def check(self):
        archs = {m.arch for m in self.all_models()}
        if len(archs) != 1:
            raise ConfigError("lineage models disagree on architecture", field="arch")

    def all_models(self) -> list:
        return [self.base, self.iter0, *self.models]

    def labels(self) -> list:
        return ["base", "iter0"] + [f"iter{i}" for i in range(1, len(self.models) + 1)]

    def checksums(self) -> list:
        return [m.checksum() for m in self.all_models()]

    def __len__(self):
        return 2 + len(self.models)


@dataclass
class SailResult:
    lineage: ModelLineage
    datasets: list
    generated: list
    losses: dict


def run_iter0(base: DenoiserModel, seed_data: PreferenceDataset, cfg: SailConfig, schedule: NoiseSchedule):
    """DPO on the seed set with the base model as both start point and reference."""
    if any(p.source != "seed" for p in seed_data):
        raise ConfigError("iter0 training data must be seed-sourced only", field="seed_data")
    return train_dpo(base, base, seed_data, cfg.iter0_optimizer, schedule, phase_rng(cfg.rng_seed, _ITER0))


def generate_pairs(
    policy, reference, prompts, cfg: SailConfig, schedule, iteration: int, oracle=None
) -> PreferenceDataset:
    """Candidate generation plus ranking for one prompt batch."""
    cand_rng = phase_rng(cfg.rng_seed, _CANDIDATES, iteration)
    draw_rng = phase_rng(cfg.rng_seed, _DRAWS, iteration)
    sel_rng = phase_rng(cfg.rng_seed, _SELECT, iteration)
    dim = policy.arch.data_dim
    sets = sample_candidate_sets(policy, prompts, cfg.n_candidates, schedule, cfg.sampler, cand_rng)
    pairs = []
    for cs in sets:
        for attempt in range(cfg.max_retries + 1):
            try:
                if cfg.reward_source == "external":
                    pair = external_reward_rank(oracle, cs, cfg.selection_strategy, sel_rng, iteration)
                else:
                    draws = make_draws(draw_rng, cfg.m_draws, schedule, dim)
                    pair = rank_candidates(
                        policy, reference, cs, draws, schedule, cfg.beta_dpo, cfg.selection_strategy, sel_rng, iteration
                    )
                pairs.append(pair)
                break
            except DegenerateSetError:
                if attempt == cfg.max_retries:
                    warnings.warn(f"degenerate candidate set for prompt {cs.y}; skipped", RuntimeWarning, stacklevel=2)
                    break
                cs = sample_candidate_sets(policy, [cs.y], cfg.n_candidates, schedule, cfg.sampler, cand_rng)[0]
    if not pairs:
        raise SailError(f"iteration {iteration}: every candidate set was degenerate")
    return PreferenceDataset(pairs)


def run_sail(
    base: DenoiserModel,
    seed_data: PreferenceDataset,
    cfg: SailConfig,
    schedule: NoiseSchedule,
    oracle=None,
    out_dir=None,
    on_model=None,
) -> SailResult:
    """Run iter0 and then ``cfg.iters`` self-rewarding iterations.

    ``oracle`` is only consulted when ``cfg.reward_source == "external"``.
    When ``out_dir`` is given each checkpoint and training set is written as
    soon as it exists. ``on_model(label, model)`` is called likewise.
    """
    from .checkpoint import save_checkpoint

    cfg.validate()
    if cfg.reward_source == "external" and oracle is None:
        raise ConfigError("external reward source needs an oracle", field="reward_source")
    seed_sum = seed_data.checksum()
    out = Path(out_dir) if out_dir is not None else None

    def persist(label, model):
        if out is not None:
            save_checkpoint(model, out / "checkpoints" / f"{label}.ckpt")
        if on_model is not None:
            on_model(label, model)

    persist("base", base)
    iter0, iter0_losses = run_iter0(base, seed_data, cfg, schedule)
    persist("iter0", iter0)
    lineage = ModelLineage(base, iter0)
    losses = {"iter0": iter0_losses}
    datasets, generated = [], []
    pool = PromptPool(base.arch.vocab_size, cfg.prompts_per_iter, phase_rng(cfg.rng_seed, _PROMPTS))

    current, previous_ref = iter0, base
    for i in range(1, cfg.iters + 1):
        rank_ref = base if cfg.ranking_reference == "base" else previous_ref
        gen = generate_pairs(current, rank_ref, pool[i].tokens, cfg, schedule, i, oracle)
        if cfg.mixup_enabled:
            target = cfg.target_size or len(gen)
            train_set = mixup(gen, seed_data, cfg.alpha_mix, target, phase_rng(cfg.rng_seed, _MIX, i))
        else:
            train_set = gen
        reference = DenoiserModel(current.arch, current.params)
        model, step_losses = train_dpo(current, reference, train_set, cfg.optimizer, schedule, phase_rng(cfg.rng_seed, _TRAIN, i))
        log.info(
            "iteration %d: %d generated pairs, %d training pairs, mean loss %.4f",
            i, len(gen), len(train_set), float(np.mean(step_losses)) if step_losses else float("nan"),
        )
        lineage.models.append(model)
        lineage.references.append(reference)
        lineage.ranking_references.append(rank_ref)
        losses[f"iter{i}"] = step_losses
        datasets.append(train_set)
        generated.append(gen)
        if out is not None:
            save_pairs(train_set, out / "datasets" / f"iter{i}.pairs")
        persist(f"iter{i}", model)
        previous_ref, current = current, model

    if seed_data.checksum() != seed_sum:
        raise SailError("seed dataset changed during the run")
    lineage.check()
    return SailResult(lineage, datasets, generated, losses)
