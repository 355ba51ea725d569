"""Implicit relative reward of a policy denoiser against a frozen reference.

For a clean point ``x0`` and a draw ``(t, eps)``::

    r = -beta/2 * (||eps - eps_policy(x_t, y, t)||^2 - ||eps - eps_ref(x_t, y, t)||^2)

averaged over a set of draws. Preferences are ``sigmoid(r_A - r_B)``. The
per-prompt partition term cancels in every difference and is never computed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DegenerateSetError
from .pairs import PreferencePair
from .sampler import CandidateSet
from .schedule import NoiseSchedule, forward_diffuse

_P_LO = np.nextafter(0.0, 1.0)
_P_HI = np.nextafter(1.0, 0.0)


@dataclass(frozen=True, eq=False)
class DrawSet:
    t: np.ndarray
    eps: np.ndarray
    shared_across_candidates: bool = True

    def __post_init__(self):
        if len(self.t) < 1 or len(self.t) != len(self.eps):
            raise ConfigError("a draw set needs M >= 1 matching (t, eps) draws", field="M_draws")

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True, eq=False)
class RewardEstimate:
    score: float
    per_draw: np.ndarray
    beta: float


def make_draws(rng: np.random.Generator, m: int, schedule: NoiseSchedule, dim: int) -> DrawSet:
    """``m`` draws with timesteps uniform over the whole schedule."""
    if m < 1:
        raise ConfigError(f"M_draws must be >= 1, got {m}", field="M_draws")
    t = rng.integers(0, schedule.num_timesteps, size=m)
    eps = rng.standard_normal((m, dim))
    return DrawSet(t, eps)


def _check_pair(policy, reference, beta):
    if policy.arch != reference.arch:
        raise ConfigError("policy and reference architectures differ", field="reference")
    if not beta > 0:
        raise ConfigError(f"beta must be > 0, got {beta}", field="beta")


def reward_per_draw(policy, reference, xs, y, draws: DrawSet, schedule: NoiseSchedule, beta: float) -> np.ndarray:
    """Per-draw rewards for a batch of clean points: array of shape (len(xs), M).

    Every candidate sees the same draws, so ranking within a set uses common
    random numbers.
    """
    _check_pair(policy, reference, beta)
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    n, m = len(xs), len(draws)
    x0 = np.repeat(xs, m, axis=0)
    t = np.tile(draws.t, n)
    eps = np.tile(draws.eps, (n, 1))
    x_t = forward_diffuse(x0, t, eps, schedule)
    err_policy = np.sum((eps - policy.predict(x_t, y, t)) ** 2, axis=1)
    err_ref = np.sum((eps - reference.predict(x_t, y, t)) ** 2, axis=1)
    return (-beta / 2.0 * (err_policy - err_ref)).reshape(n, m)


def relative_reward(policy, reference, x0, y: int, draws: DrawSet, schedule, beta: float) -> RewardEstimate:
    per_draw = reward_per_draw(policy, reference, np.asarray(x0)[None, :], y, draws, schedule, beta)[0]
    return RewardEstimate(float(np.mean(per_draw)), per_draw, float(beta))


def preference_from_scores(score_a, score_b):
    """``sigmoid(score_a - score_b)`` kept strictly inside (0, 1)."""
    return np.clip(expit(np.subtract(score_a, score_b)), _P_LO, _P_HI)


def preference_probability(policy, reference, x_a, x_b, y: int, draws: DrawSet, schedule, beta: float) -> float:
    """Monte Carlo estimate of P(x_a preferred over x_b | y)."""
    if not draws.shared_across_candidates:
        raise ConfigError("pairwise preference requires a draw set shared by both points", field="draws")
    r_a = relative_reward(policy, reference, x_a, y, draws, schedule, beta)
    r_b = relative_reward(policy, reference, x_b, y, draws, schedule, beta)
    return float(preference_from_scores(r_a.score, r_b.score))


def assign_labels(x_a, x_b, p: float):
    """(winner, loser); a tie at exactly 0.5 goes to ``(x_b, x_a)``."""
    return (x_a, x_b) if p > 0.5 else (x_b, x_a)


def select_pair(scores, strategy: str, rng=None):
    """Indices ``(winner, loser)`` chosen from a vector of candidate scores."""
    scores = np.asarray(scores, dtype=np.float64)
    if len(scores) < 2:
        raise ConfigError("need at least 2 candidates to form a pair", field="n_candidates")
    if strategy == "best_worst":
        hi, lo = int(np.argmax(scores)), int(np.argmin(scores))
        if scores[hi] == scores[lo]:
            raise DegenerateSetError("all candidate scores are identical; no best/worst pair")
        return hi, lo
    if strategy == "random":
        if rng is None:
            raise ConfigError("random selection needs an rng", field="rng")
        a, b = (int(i) for i in rng.choice(len(scores), size=2, replace=False))
        return assign_labels(a, b, float(preference_from_scores(scores[a], scores[b])))
    raise ConfigError(f"unknown selection strategy {strategy!r}", field="selection_strategy")


def pair_from_candidates(cs: CandidateSet, winner: int, loser: int, iteration: int) -> PreferencePair:
    return PreferencePair(
        y=cs.y,
        x_w=np.array(cs.samples[winner]),
        x_l=np.array(cs.samples[loser]),
        source="generated",
        iteration=iteration,
        p_annotation=float(preference_from_scores(cs.scores[winner], cs.scores[loser])),
    )


def score_candidates(policy, reference, cs: CandidateSet, draws: DrawSet, schedule, beta: float) -> CandidateSet:
    """Return a copy of ``cs`` with Monte Carlo self-reward scores filled in."""
    per_draw = reward_per_draw(policy, reference, cs.samples, cs.y, draws, schedule, beta)
    return replace(cs, scores=per_draw.mean(axis=1))


def rank_candidates(
    policy,
    reference,
    cs: CandidateSet,
    draws: DrawSet,
    schedule,
    beta: float,
    strategy: str = "best_worst",
    rng=None,
    iteration: int | None = None,
) -> PreferencePair:
    if len(cs) < 2:
        raise ConfigError("need at least 2 candidates to form a pair", field="n_candidates")
    scored = score_candidates(policy, reference, cs, draws, schedule, beta)
    winner, loser = select_pair(scored.scores, strategy, rng)
    return pair_from_candidates(scored, winner, loser, cs.iteration if iteration is None else iteration)
