"""Diffusion DPO objective and training loop.

The preference logit for a pair at a shared draw ``(t, eps_w, eps_l)`` is::

    logit = -beta/2 * [(||eps_w - eps_pol(x_t^w)||^2 - ||eps_w - eps_ref(x_t^w)||^2)
                       - (||eps_l - eps_pol(x_t^l)||^2 - ||eps_l - eps_ref(x_t^l)||^2)]

and the loss is ``-log sigmoid(logit)``, evaluated as ``logaddexp(0, -logit)``.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.special import expit

from .denoiser import DenoiserModel
from .errors import ConfigError, NumericError
from .optim import Adam, OptimizerConfig
from .schedule import forward_diffuse

log = logging.getLogger(__name__)

LN2 = math.log(2.0)


def neg_log_sigmoid(z):
    return np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


def dpo_logits(policy_out, ref_out, eps_w, eps_l, beta_dpo):
    """Logits for ``B`` pairs from stacked ``[winners; losers]`` outputs of shape (2B, D)."""
    b = len(eps_w)
    err_p = np.sum((np.concatenate([eps_w, eps_l]) - policy_out) ** 2, axis=1)
    err_r = np.sum((np.concatenate([eps_w, eps_l]) - ref_out) ** 2, axis=1)
    gap = err_p - err_r
    return -beta_dpo / 2.0 * (gap[:b] - gap[b:])


def _batch_inputs(y, x_w, x_l, t, eps_w, eps_l, schedule):
    x_t = np.concatenate([forward_diffuse(x_w, t, eps_w, schedule), forward_diffuse(x_l, t, eps_l, schedule)])
    return x_t, np.concatenate([y, y]), np.concatenate([t, t])


def dpo_batch_loss(policy, reference, y, x_w, x_l, t, eps_w, eps_l, schedule, beta_dpo, batch_index=None):
    """Mean DPO loss over a batch and its gradient with respect to policy parameters."""
    if policy.arch != reference.arch:
        raise ConfigError("policy and reference architectures differ", field="reference")
    x_t, yy, tt = _batch_inputs(y, x_w, x_l, t, eps_w, eps_l, schedule)
    ref_out = reference.predict(x_t, yy, tt)
    out, cache = policy.forward(x_t, yy, tt)
    logits = dpo_logits(out, ref_out, eps_w, eps_l, beta_dpo)
    if not np.all(np.isfinite(logits)):
        bad = int(np.flatnonzero(~np.isfinite(logits))[0])
        raise NumericError(f"non-finite DPO logit for pair {bad}", batch_index=batch_index, pair_id=bad)
    b = len(logits)
    loss = float(np.mean(neg_log_sigmoid(logits)))
    # d loss / d logit, then d logit / d output: +beta (eps - out) for winners, -beta (eps - out) for losers
    dlogit = -expit(-logits) / b
    sign = np.concatenate([np.ones(b), -np.ones(b)])
    coef = (np.concatenate([dlogit, dlogit]) * sign * beta_dpo)[:, None]
    dout = coef * (np.concatenate([eps_w, eps_l]) - out)
    return loss, policy.backward(cache, dout)


def dpo_pair_loss(policy, reference, pair, t: int, eps_w, eps_l, schedule, beta_dpo: float) -> float:
    """Loss for one :class:`PreferencePair` at a single draw."""
    try:
        loss, _ = dpo_batch_loss(
            policy,
            reference,
            np.array([pair.y]),
            pair.x_w[None, :],
            pair.x_l[None, :],
            np.array([t]),
            np.asarray(eps_w, dtype=np.float64)[None, :],
            np.asarray(eps_l, dtype=np.float64)[None, :],
            schedule,
            beta_dpo,
        )
    except NumericError as exc:
        exc.pair_id = pair.key()
        raise
    return loss


def train_dpo(policy_init: DenoiserModel, reference: DenoiserModel, data, opt: OptimizerConfig, schedule, rng):
    """Run ``opt.max_steps`` mini-batch updates and return ``(policy, losses)``.

    Batches walk a fresh permutation each epoch; every pair gets a new
    timestep and one noise vector shared by winner and loser on every visit.
    """
    if len(data) == 0:
        raise ConfigError("DPO training data is empty", field="data")
    if policy_init.arch != reference.arch:
        raise ConfigError("policy and reference architectures differ", field="reference")
    ys, xw, xl = data.arrays()
    n = len(ys)
    bs = min(opt.batch_size, n)
    ref_sum = reference.checksum()
    params = policy_init.params.copy()
    adam = Adam(opt)
    losses = []
    order = np.zeros(0, dtype=np.int64)
    for step in range(opt.max_steps):
        if len(order) < bs:
            order = np.concatenate([order, rng.permutation(n)])
        idx, order = order[:bs], order[bs:]
        t = rng.integers(0, schedule.num_timesteps, size=bs)
        eps = rng.standard_normal((bs, xw.shape[1]))
        policy = DenoiserModel(policy_init.arch, params)
        loss, grad = dpo_batch_loss(
            policy, reference, ys[idx], xw[idx], xl[idx], t, eps, eps, schedule, opt.beta_dpo, batch_index=step
        )
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient at step {step}", step=step, batch_index=step)
        params = adam.step(params, grad)
        losses.append(loss)
    assert reference.checksum() == ref_sum, "reference model changed during DPO training"
    return DenoiserModel(policy_init.arch, params), losses
