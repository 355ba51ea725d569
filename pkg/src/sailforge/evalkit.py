"""Per-iteration metrics: oracle alignment, self-labelling accuracy, diversity.

The metrics file is comma-separated text with the header ``METRICS_HEADER``
and one row per model in a lineage (``base``, ``iter0``, ``iter1`` ...).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .dpo import LN2
from .errors import ArtifactIOError, ConfigError, SailError
from .pairs import atomic_write
from .sampler import SamplerConfig, sample_batch
from .selfreward import assign_labels, make_draws, preference_from_scores, reward_per_draw

METRICS_HEADER = "iter,mean_oracle_reward,ranking_accuracy,ranking_ci_lo,ranking_ci_hi,diversity,mean_dpo_loss"
Z95 = 1.959963984540054


@dataclass(frozen=True)
class IterationMetrics:
    iteration: int
    mean_oracle_reward: float
    ranking_accuracy: float
    ranking_ci_lo: float
    ranking_ci_hi: float
    diversity: float
    mean_dpo_loss: float

    def __post_init__(self):
        if not 0.0 <= self.ranking_accuracy <= 1.0:
            raise ValueError(f"ranking_accuracy {self.ranking_accuracy} outside [0, 1]")
        if not self.diversity >= 0.0:
            raise ValueError(f"diversity {self.diversity} is negative")

    def row(self) -> str:
        vals = (
            self.mean_oracle_reward,
            self.ranking_accuracy,
            self.ranking_ci_lo,
            self.ranking_ci_hi,
            self.diversity,
            self.mean_dpo_loss,
        )
        return ",".join([str(self.iteration)] + [f"{v:.10f}" for v in vals])


@dataclass(frozen=True)
class EvalConfig:
    n_samples_per_prompt: int = 125
    n_rank_pairs: int = 1000
    margin: float = 0.1
    n_diversity_per_prompt: int = 64
    m_draws: int = 10
    rng_seed: int = 0


@dataclass(frozen=True)
class RankingAccuracy:
    accuracy: float
    ci_lo: float
    ci_hi: float
    n_kept: int


def _per_prompt(prompts, n: int) -> np.ndarray:
    return np.repeat(np.asarray(list(prompts), dtype=np.int64), n)


def _seeds(rng, n: int) -> list:
    return [int(s) for s in rng.integers(0, 2**63, size=n)]


def oracle_rewards(model, oracle, prompts, n_samples_per_prompt: int, schedule, sampler_cfg, rng):
    """Oracle reward of every fresh sample, flattened prompt-major."""
    if n_samples_per_prompt < 1:
        raise ConfigError("n_samples_per_prompt must be >= 1", field="n_samples_per_prompt")
    ys = _per_prompt(prompts, n_samples_per_prompt)
    xs = sample_batch(model, ys, schedule, sampler_cfg, _seeds(rng, len(ys)))
    return oracle.reward(ys, xs)


def eval_alignment(model, oracle, prompts, n_samples_per_prompt: int, schedule, sampler_cfg, rng) -> float:
    """Mean oracle reward over ``n_samples_per_prompt`` fresh samples per prompt."""
    return float(np.mean(oracle_rewards(model, oracle, prompts, n_samples_per_prompt, schedule, sampler_cfg, rng)))


def binomial_interval(hits: int, n: int):
    """Normal-approximation 95% interval, clipped to [0, 1]."""
    p = hits / n
    half = Z95 * math.sqrt(p * (1.0 - p) / n)
    return max(0.0, p - half), min(1.0, p + half)


def labeling_accuracy(score_a, score_b, oracle_a, oracle_b, margin: float = 0.1) -> RankingAccuracy:
    """Agreement between score-induced labels and oracle order on margin-filtered pairs."""
    if margin < 0:
        raise ConfigError("margin must be >= 0", field="margin")
    score_a, score_b = np.asarray(score_a, float), np.asarray(score_b, float)
    oracle_a, oracle_b = np.asarray(oracle_a, float), np.asarray(oracle_b, float)
    keep = np.abs(oracle_a - oracle_b) > margin
    n = int(keep.sum())
    if n == 0:
        raise SailError(f"every pair was filtered out by margin {margin}; use a smaller margin")
    hits = 0
    for sa, sb, oa, ob in zip(score_a[keep], score_b[keep], oracle_a[keep], oracle_b[keep]):
        p = float(preference_from_scores(sa, sb))
        label_a_wins = assign_labels(True, False, p)[0]
        hits += label_a_wins == (oa > ob)
    lo, hi = binomial_interval(hits, n)
    return RankingAccuracy(hits / n, lo, hi, n)


def eval_ranking_accuracy(
    policy,
    reference,
    oracle,
    prompts,
    n_pairs: int,
    margin: float,
    schedule,
    m_draws: int,
    beta: float,
    rng,
    pair_model=None,
    sampler_cfg=None,
) -> RankingAccuracy:
    """How often the self-reward label of ``policy`` matches the oracle.

    Pairs are drawn from ``pair_model`` (the reference by default), cycling
    through ``prompts``; each pair shares one draw set between its members.
    """
    if n_pairs < 1:
        raise ConfigError("n_pairs must be >= 1", field="n_pairs")
    sampler_cfg = sampler_cfg or SamplerConfig()
    pair_model = reference if pair_model is None else pair_model
    prompts = list(prompts)
    ys = np.array([prompts[i % len(prompts)] for i in range(n_pairs)], dtype=np.int64)
    xs = sample_batch(pair_model, np.repeat(ys, 2), schedule, sampler_cfg, _seeds(rng, 2 * n_pairs))
    x_a, x_b = xs[0::2], xs[1::2]
    dim = xs.shape[1]
    score_a, score_b = np.empty(n_pairs), np.empty(n_pairs)
    for i, y in enumerate(ys):
        draws = make_draws(rng, m_draws, schedule, dim)
        r = reward_per_draw(policy, reference, np.stack([x_a[i], x_b[i]]), int(y), draws, schedule, beta).mean(axis=1)
        score_a[i], score_b[i] = r
    return labeling_accuracy(score_a, score_b, oracle.reward(ys, x_a), oracle.reward(ys, x_b), margin)


def mean_pairwise_distance(samples_by_prompt) -> float:
    """Mean over groups of the mean pairwise Euclidean distance within a group."""
    per = []
    for xs in samples_by_prompt:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        if len(xs) < 2:
            raise ConfigError("diversity needs at least 2 samples per prompt", field="n_samples_per_prompt")
        per.append(float(np.mean(pdist(xs))))
    return float(np.mean(per))


def eval_diversity(model, prompts, n_samples_per_prompt: int, schedule, sampler_cfg, rng) -> float:
    if n_samples_per_prompt < 2:
        raise ConfigError("n_samples_per_prompt must be >= 2", field="n_samples_per_prompt")
    prompts = list(prompts)
    ys = _per_prompt(prompts, n_samples_per_prompt)
    xs = sample_batch(model, ys, schedule, sampler_cfg, _seeds(rng, len(ys)))
    return mean_pairwise_distance(np.split(xs, len(prompts)))


def lineage_metrics(lineage, oracle, schedule, beta: float, losses=None, eval_cfg: EvalConfig | None = None,
                    sampler_cfg=None) -> list:
    """One :class:`IterationMetrics` per lineage model.

    Row 0 is the base model, row 1 iter0, row ``i + 1`` iteration ``i``.
    Every model is scored on the same evaluation streams. Ranking accuracy
    always labels base-model pairs against the base model as reference, so
    rows are comparable; the base row is therefore exactly uninformative.
    """
    eval_cfg = eval_cfg or EvalConfig()
    sampler_cfg = sampler_cfg or SamplerConfig()
    prompts = range(oracle.vocab_size)
    losses = losses or {}

    def rng(k):
        return np.random.default_rng([int(eval_cfg.rng_seed), 9, k])

    rows = []
    for idx, (label, model) in enumerate(zip(lineage.labels(), lineage.all_models())):
        reward = eval_alignment(model, oracle, prompts, eval_cfg.n_samples_per_prompt, schedule, sampler_cfg, rng(0))
        acc = eval_ranking_accuracy(
            model, lineage.base, oracle, prompts, eval_cfg.n_rank_pairs, eval_cfg.margin, schedule,
            eval_cfg.m_draws, beta, rng(1), pair_model=lineage.base, sampler_cfg=sampler_cfg,
        )
        div = eval_diversity(model, prompts, eval_cfg.n_diversity_per_prompt, schedule, sampler_cfg, rng(2))
        step_losses = losses.get(label)
        loss = LN2 if label == "base" or not step_losses else float(np.mean(step_losses))
        rows.append(IterationMetrics(idx, reward, acc.accuracy, acc.ci_lo, acc.ci_hi, div, loss))
    return rows


def format_metrics(rows) -> str:
    out = io.StringIO()
    out.write(METRICS_HEADER + "\n")
    for r in rows:
        if not all(math.isfinite(v) for v in (r.mean_oracle_reward, r.ranking_accuracy, r.diversity, r.mean_dpo_loss)):
            raise SailError(f"non-finite metric in row {r.iteration}")
        out.write(r.row() + "\n")
    return out.getvalue()


def parse_metrics(text: str) -> list:
    lines = text.strip().splitlines()
    if not lines or lines[0] != METRICS_HEADER:
        raise ArtifactIOError("metrics file has an unexpected header")
    rows = []
    for line in lines[1:]:
        f = line.split(",")
        rows.append(IterationMetrics(int(f[0]), *(float(v) for v in f[1:])))
    return rows


def emit_metrics(rows, sink) -> str:
    """Write rows to ``sink`` (a path or a text stream) and return the text."""
    text = format_metrics(rows)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        atomic_write(sink, text)
    return text


def _polyline(xs, ys, box, colour):
    x0, y0, w, h = box
    lo, hi = min(ys), max(ys)
    span = hi - lo or 1.0
    n = max(len(xs) - 1, 1)
    pts = " ".join(f"{x0 + w * i / n:.2f},{y0 + h - h * (v - lo) / span:.2f}" for i, v in enumerate(ys))
    dots = "".join(
        f'<circle cx="{x0 + w * i / n:.2f}" cy="{y0 + h - h * (v - lo) / span:.2f}" r="3" fill="{colour}"/>'
        for i, v in enumerate(ys)
    )
    return f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{pts}"/>{dots}', lo, hi


def metrics_svg(rows, labels=None) -> str:
    """Three stacked panels (reward, ranking accuracy, diversity) against iteration."""
    labels = labels or [str(r.iteration) for r in rows]
    panels = [
        ("mean oracle reward", [r.mean_oracle_reward for r in rows], "#1f77b4"),
        ("ranking accuracy", [r.ranking_accuracy for r in rows], "#d62728"),
        ("diversity", [r.diversity for r in rows], "#2ca02c"),
    ]
    width, ph, left, top = 480, 150, 70, 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{top + len(panels) * (ph + 40) + 20}" '
        f'font-family="sans-serif" font-size="11">'
    ]
    for k, (title, vals, colour) in enumerate(panels):
        oy = top + k * (ph + 40)
        box = (left, oy + 15, width - left - 20, ph - 30)
        line, lo, hi = _polyline(range(len(vals)), vals, box, colour)
        parts.append(f'<text x="{left}" y="{oy + 8}" font-weight="bold">{title}</text>')
        parts.append(
            f'<rect x="{box[0]}" y="{box[1]}" width="{box[2]}" height="{box[3]}" fill="none" stroke="#999"/>'
        )
        parts.append(f'<text x="{left - 5}" y="{box[1] + 4}" text-anchor="end">{hi:.3g}</text>')
        parts.append(f'<text x="{left - 5}" y="{box[1] + box[3]}" text-anchor="end">{lo:.3g}</text>')
        n = max(len(vals) - 1, 1)
        for i, lab in enumerate(labels):
            parts.append(
                f'<text x="{box[0] + box[2] * i / n:.2f}" y="{box[1] + box[3] + 14}" text-anchor="middle">{lab}</text>'
            )
        parts.append(line)
    parts.append("</svg>\n")
    return "\n".join(parts)
