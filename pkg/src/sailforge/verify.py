"""Independent oracle battery.

Each check recomputes a quantity with plain scalar arithmetic (Python floats
and loops, no shared helpers) and compares it with the main implementation.
The report is comma-separated: ``check,status,discrepancy,tolerance``.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .denoiser import Arch, init_model
from .dpo import dpo_batch_loss, dpo_pair_loss
from .errors import DegenerateSetError
from .pairs import PreferencePair
from .sampler import CandidateSet, SamplerConfig, sample_batch
from .schedule import build_schedule
from .selfreward import DrawSet, rank_candidates, relative_reward

REPORT_HEADER = "check,status,discrepancy,tolerance"


@dataclass(frozen=True)
class OracleReport:
    check: str
    status: str
    discrepancy: float
    tolerance: float

    @classmethod
    def judge(cls, check, discrepancy, tolerance):
        return cls(check, "pass" if discrepancy <= tolerance else "fail", float(discrepancy), float(tolerance))

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def row(self) -> str:
        return f"{self.check},{self.status},{self.discrepancy:.6e},{self.tolerance:.6e}"


def format_report(reports) -> str:
    return "\n".join([REPORT_HEADER] + [r.row() for r in reports]) + "\n"


# ---- scalar reference arithmetic -------------------------------------------------


def _alpha_bars(n, lo, hi):
    out, prod = [], 1.0
    for t in range(n):
        beta = lo + (hi - lo) * t / (n - 1) if n > 1 else lo
        prod *= 1.0 - beta
        out.append(prod)
    return out


class _ScalarNet:
    """Forward pass over a flat parameter list, one point at a time."""

    def __init__(self, arch: Arch, params):
        self.a = arch
        p = [float(v) for v in params]
        pos = 0
        k1, e = arch.vocab_size + 1, arch.embed_dim
        self.embed = [p[pos + i * e : pos + (i + 1) * e] for i in range(k1)]
        pos += k1 * e
        widths = [arch.data_dim + arch.embed_dim + arch.time_dim, *arch.hidden, arch.data_dim]
        self.layers = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            w = [p[pos + r * fan_out : pos + (r + 1) * fan_out] for r in range(fan_in)]
            pos += fan_in * fan_out
            b = p[pos : pos + fan_out]
            pos += fan_out
            self.layers.append((w, b))

    def _time(self, t):
        half = self.a.time_dim // 2
        ang = [t * math.exp(-math.log(10000.0) * k / max(half, 1)) for k in range(half)]
        return [math.sin(v) for v in ang] + [math.cos(v) for v in ang]

    def __call__(self, x, y, t):
        h = [float(v) for v in x] + self.embed[y] + self._time(t)
        for i, (w, b) in enumerate(self.layers):
            z = [b[j] + sum(h[r] * w[r][j] for r in range(len(h))) for j in range(len(b))]
            last = i == len(self.layers) - 1
            if last or self.a.activation == "identity":
                h = z
            elif self.a.activation == "tanh":
                h = [math.tanh(v) for v in z]
            else:
                h = [v if v > 0 else 0.0 for v in z]
        return h


def _sq(u, v):
    return sum((a - b) ** 2 for a, b in zip(u, v))


def _scalar_reward(pol, ref, x0, y, ts, epss, abar, beta):
    total = 0.0
    for t, eps in zip(ts, epss):
        s, c = math.sqrt(abar[t]), math.sqrt(1.0 - abar[t])
        xt = [s * a + c * e for a, e in zip(x0, eps)]
        total += -beta / 2.0 * (_sq(eps, pol(xt, y, t)) - _sq(eps, ref(xt, y, t)))
    return total / len(ts)


def _scalar_dpo(pol, ref, y, xw, xl, t, eps_w, eps_l, abar, beta):
    s, c = math.sqrt(abar[t]), math.sqrt(1.0 - abar[t])
    xtw = [s * a + c * e for a, e in zip(xw, eps_w)]
    xtl = [s * a + c * e for a, e in zip(xl, eps_l)]
    gap_w = _sq(eps_w, pol(xtw, y, t)) - _sq(eps_w, ref(xtw, y, t))
    gap_l = _sq(eps_l, pol(xtl, y, t)) - _sq(eps_l, ref(xtl, y, t))
    z = -beta / 2.0 * (gap_w - gap_l)
    return math.log1p(math.exp(-z)) if z > 0 else -z + math.log1p(math.exp(z))


def _small_arch(r: random.Random, T: int, activations=("tanh", "relu", "identity")) -> Arch:
    return Arch(
        data_dim=r.choice([1, 2, 3]),
        vocab_size=r.choice([2, 3, 5]),
        embed_dim=r.choice([2, 4]),
        time_dim=r.choice([2, 4]),
        hidden=tuple(r.choice([3, 5, 8]) for _ in range(r.choice([1, 2]))),
        activation=r.choice(activations),
        num_timesteps=T,
    )


def _model_pair(r: random.Random, T: int, activations=("tanh", "relu", "identity")):
    arch = _small_arch(r, T, activations)
    pol = init_model(arch, np.random.default_rng(r.getrandbits(32)))
    ref = init_model(arch, np.random.default_rng(r.getrandbits(32)))
    return arch, pol, ref


# ---- checks ----------------------------------------------------------------------


def check_schedule(seed):
    worst = 0.0
    for n, lo, hi in ((100, 1e-4, 0.02), (1000, 1e-4, 0.02), (10, 0.01, 0.3), (1, 0.05, 0.05)):
        ref = _alpha_bars(n, lo, hi)
        got = build_schedule(n, "linear", lo, hi).alpha_bar
        worst = max(worst, max(abs(a - b) for a, b in zip(ref, got)))
    return OracleReport.judge("schedule_product_loop", worst, 1e-12)


def check_reward(seed, n_cases=20):
    r = random.Random(seed)
    worst = 0.0
    for _ in range(n_cases):
        T = r.choice([10, 50, 100])
        sched = build_schedule(T)
        abar = [float(v) for v in sched.alpha_bar]
        arch, pol, ref = _model_pair(r, T)
        m = r.randint(1, 8)
        ts = [r.randrange(T) for _ in range(m)]
        epss = [[r.gauss(0, 1) for _ in range(arch.data_dim)] for _ in range(m)]
        x0 = [r.uniform(-3, 3) for _ in range(arch.data_dim)]
        y = r.randrange(arch.vocab_size)
        beta = r.choice([0.5, 3.0, 100.0])
        want = _scalar_reward(_ScalarNet(arch, pol.params), _ScalarNet(arch, ref.params), x0, y, ts, epss, abar, beta)
        got = relative_reward(pol, ref, np.array(x0), y, DrawSet(np.array(ts), np.array(epss)), sched, beta).score
        worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    return OracleReport.judge("scalar_relative_reward", worst, 1e-12)


def check_best_worst(seed, n_sets=200):
    r = random.Random(seed + 1)
    T = 20
    sched = build_schedule(T)
    abar = [float(v) for v in sched.alpha_bar]
    disagreements = 0
    for _ in range(n_sets):
        arch, pol, ref = _model_pair(r, T)
        n = r.randint(2, 8)
        xs = [[r.uniform(-3, 3) for _ in range(arch.data_dim)] for _ in range(n)]
        y = r.randrange(arch.vocab_size)
        m = r.randint(1, 4)
        ts = [r.randrange(T) for _ in range(m)]
        epss = [[r.gauss(0, 1) for _ in range(arch.data_dim)] for _ in range(m)]
        sp, sr = _ScalarNet(arch, pol.params), _ScalarNet(arch, ref.params)
        scores = [_scalar_reward(sp, sr, x, y, ts, epss, abar, 3.0) for x in xs]
        # winner: first candidate no other strictly beats; loser: first that beats no other
        beaten = [any(scores[j] > scores[i] for j in range(n)) for i in range(n)]
        beats = [any(scores[i] > scores[j] for j in range(n)) for i in range(n)]
        best = beaten.index(False)
        worst = beats.index(False)
        cs = CandidateSet(y, np.array(xs), list(range(n)))
        try:
            pair = rank_candidates(pol, ref, cs, DrawSet(np.array(ts), np.array(epss)), sched, 3.0)
        except DegenerateSetError:
            # only acceptable when no candidate beats any other
            ok = not any(beats)
        else:
            ok = any(beats) and np.array_equal(pair.x_w, xs[best]) and np.array_equal(pair.x_l, xs[worst])
        disagreements += not ok
    return OracleReport.judge("exhaustive_best_worst", disagreements, 0)


def check_gradients(seed, n_models=20, h=1e-6):
    r = random.Random(seed + 2)
    worst = 0.0
    for _ in range(n_models):
        T = 50
        sched = build_schedule(T)
        # smooth activations only; a ReLU kink inside the stencil breaks central differences
        arch, pol, ref = _model_pair(r, T, ("tanh", "identity"))
        d = arch.data_dim
        y = np.array([r.randrange(arch.vocab_size)])
        xw = np.array([[r.uniform(-2, 2) for _ in range(d)]])
        xl = np.array([[r.uniform(-2, 2) for _ in range(d)]])
        t = np.array([r.randrange(T)])
        eps = np.array([[r.gauss(0, 1) for _ in range(d)]])
        beta = 0.5
        _, grad = dpo_batch_loss(pol, ref, y, xw, xl, t, eps, eps, sched, beta)
        pair = PreferencePair(int(y[0]), xw[0], xl[0], "seed", 0)
        fd = np.empty_like(grad)
        base = pol.params.copy()
        for i in range(len(base)):
            up, dn = base.copy(), base.copy()
            up[i] += h
            dn[i] -= h
            f_up = dpo_pair_loss(pol.with_params(up), ref, pair, int(t[0]), eps[0], eps[0], sched, beta)
            f_dn = dpo_pair_loss(pol.with_params(dn), ref, pair, int(t[0]), eps[0], eps[0], sched, beta)
            fd[i] = (f_up - f_dn) / (2 * h)
        rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, float(rel))
    return OracleReport.judge("finite_difference_gradients", worst, 1e-5)


class _GaussianDenoiser:
    """Exact noise predictor for clean data ~ N(mu, s2 I)."""

    def __init__(self, mu, s2, schedule):
        self.mu, self.s2, self.ab = np.asarray(mu, float), s2, schedule.alpha_bar
        self.arch = Arch(data_dim=len(mu), num_timesteps=schedule.num_timesteps)

    def predict(self, x, y, t):
        ab = self.ab[t]
        return math.sqrt(1 - ab) * (x - math.sqrt(ab) * self.mu) / (ab * self.s2 + 1 - ab)


def check_gaussian_sampler(seed, n=10_000):
    """Sample mean of the default sampler driven by the exact 1-D Gaussian predictor, in standard errors."""
    sched = build_schedule()
    mu, s2 = 1.5, 0.25
    model = _GaussianDenoiser([mu], s2, sched)
    seeds = np.random.default_rng(seed + 3).integers(0, 2**63, size=n)
    xs = sample_batch(model, np.zeros(n, dtype=np.int64), sched, SamplerConfig(), [int(s) for s in seeds])
    z = abs(float(xs.mean()) - mu) / math.sqrt(s2 / n)
    return OracleReport.judge("analytic_gaussian_sampler", z, 3.0)


def check_dpo_loss(seed, n_cases=20):
    r = random.Random(seed + 4)
    worst = 0.0
    for _ in range(n_cases):
        T = r.choice([10, 100])
        sched = build_schedule(T)
        abar = [float(v) for v in sched.alpha_bar]
        arch, pol, ref = _model_pair(r, T)
        d = arch.data_dim
        y = r.randrange(arch.vocab_size)
        xw = [r.uniform(-3, 3) for _ in range(d)]
        xl = [r.uniform(-3, 3) for _ in range(d)]
        t = r.randrange(T)
        eps_w = [r.gauss(0, 1) for _ in range(d)]
        eps_l = [r.gauss(0, 1) for _ in range(d)]
        beta = r.choice([0.5, 3.0, 50.0])
        want = _scalar_dpo(_ScalarNet(arch, pol.params), _ScalarNet(arch, ref.params), y, xw, xl, t, eps_w, eps_l,
                           abar, beta)
        pair = PreferencePair(y, np.array(xw), np.array(xl), "seed", 0)
        got = dpo_pair_loss(pol, ref, pair, t, eps_w, eps_l, sched, beta)
        worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    return OracleReport.judge("scalar_dpo_loss", worst, 1e-12)


CHECKS = (
    check_best_worst,
    check_gaussian_sampler,
    check_gradients,
    check_schedule,
    check_reward,
    check_dpo_loss,
)


def oracle_battery(rng_seed: int = 0) -> list:
    """Run every check; reports are sorted by check name."""
    return sorted((check(rng_seed) for check in CHECKS), key=lambda rep: rep.check)
