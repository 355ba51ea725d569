"""Conditional noise predictor eps_theta(x_t, y, t) with exact reverse-mode gradients.

The network is a small MLP over ``[x_t, embed[y], sinusoid(t)]``. Parameters
live in one flat float64 vector; ``layout`` maps named tensors onto views of it.
Token ``arch.vocab_size`` is reserved as the null prompt used for
classifier-free guidance.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, NumericError
from .optim import Adam, OptimizerConfig
from .schedule import NoiseSchedule, forward_diffuse

log = logging.getLogger(__name__)

_ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass(frozen=True)
class Arch:
    data_dim: int = 2
    vocab_size: int = 8
    embed_dim: int = 8
    time_dim: int = 16
    hidden: tuple = (64, 64)
    activation: str = "tanh"
    num_timesteps: int = 100

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"activation must be one of {_ACTIVATIONS}", field="activation")
        if self.time_dim % 2:
            raise ConfigError("time_dim must be even", field="time_dim")
        for name in ("data_dim", "vocab_size", "num_timesteps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1", field=name)

    @property
    def null_token(self) -> int:
        return self.vocab_size

    @property
    def input_dim(self) -> int:
        return self.data_dim + self.embed_dim + self.time_dim

    def to_json(self) -> str:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Arch":
        d = json.loads(text)
        d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@lru_cache(maxsize=None)
def _layout(arch: Arch):
    entries = {}
    offset = 0

    def add(name, shape):
        nonlocal offset
        size = int(np.prod(shape))
        entries[name] = (slice(offset, offset + size), shape)
        offset += size

    add("embed", (arch.vocab_size + 1, arch.embed_dim))
    widths = (arch.input_dim,) + arch.hidden + (arch.data_dim,)
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        add(f"w{i}", (fan_in, fan_out))
        add(f"b{i}", (fan_out,))
    return entries, offset


def param_layout(arch: Arch) -> dict:
    """Map of tensor name -> (slice into params, shape)."""
    return dict(_layout(arch)[0])


def num_params(arch: Arch) -> int:
    return _layout(arch)[1]


@lru_cache(maxsize=None)
def _time_table(num_timesteps: int, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    angles = np.arange(num_timesteps, dtype=np.float64)[:, None] * freqs[None, :]
    table = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    table.setflags(write=False)
    return table


def timestep_features(t, arch: Arch) -> np.ndarray:
    return _time_table(arch.num_timesteps, arch.time_dim)[t]


def _act(name, a):
    if name == "tanh":
        return np.tanh(a)
    if name == "relu":
        return np.maximum(a, 0.0)
    return a


def _act_grad(name, a, z, dz):
    if name == "tanh":
        return dz * (1.0 - z * z)
    if name == "relu":
        return dz * (a > 0)
    return dz


@dataclass(frozen=True, eq=False)
class DenoiserModel:
    arch: Arch
    params: np.ndarray = field(repr=False)

    def __post_init__(self):
        params = np.ascontiguousarray(self.params, dtype=np.float64)
        if params.ndim != 1 or params.size != num_params(self.arch):
            raise ConfigError(
                f"expected {num_params(self.arch)} parameters, got shape {params.shape}", field="params"
            )
        if params is self.params:
            params = params.copy()
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    @property
    def layout(self) -> dict:
        return param_layout(self.arch)

    def tensor(self, name: str) -> np.ndarray:
        sl, shape = self.layout[name]
        return self.params[sl].reshape(shape)

    def with_params(self, params) -> "DenoiserModel":
        return DenoiserModel(self.arch, params)

    def checksum(self) -> str:
        h = hashlib.sha256(self.arch.to_json().encode())
        h.update(self.params.astype("<f8").tobytes())
        return h.hexdigest()

    def _inputs(self, x, y, t):
        arch = self.arch
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        n = x.shape[0]
        if x.shape[1] != arch.data_dim:
            raise ValueError(f"expected data dimension {arch.data_dim}, got {x.shape[1]}")
        y = np.broadcast_to(np.asarray(y, dtype=np.int64), (n,))
        t = np.broadcast_to(np.asarray(t, dtype=np.int64), (n,))
        if np.any(y < 0) or np.any(y > arch.null_token):
            raise ConfigError(f"prompt token outside vocabulary of size {arch.vocab_size}", field="y")
        if np.any(t < 0) or np.any(t >= arch.num_timesteps):
            raise IndexError(f"timestep outside [0, {arch.num_timesteps})")
        emb = self.tensor("embed")[y]
        h = np.concatenate([x, emb, timestep_features(t, arch)], axis=1)
        return h, y

    def forward(self, x, y, t):
        """Batched forward pass returning ``(output, cache)`` for :meth:`backward`."""
        h, y = self._inputs(x, y, t)
        n_layers = len(self.arch.hidden) + 1
        acts = [h]
        pre = []
        for i in range(n_layers):
            a = acts[-1] @ self.tensor(f"w{i}") + self.tensor(f"b{i}")
            if i < n_layers - 1:
                pre.append(a)
                acts.append(_act(self.arch.activation, a))
            else:
                out = a
        return out, (y, acts, pre)

    def predict(self, x, y, t) -> np.ndarray:
        return self.forward(x, y, t)[0]

    def backward(self, cache, dout) -> np.ndarray:
        """Gradient of ``sum(dout * output)`` with respect to the flat parameters."""
        y, acts, pre = cache
        grad = np.zeros_like(self.params)
        layout = self.layout
        n_layers = len(self.arch.hidden) + 1
        delta = np.asarray(dout, dtype=np.float64)
        for i in reversed(range(n_layers)):
            w_sl, w_shape = layout[f"w{i}"]
            b_sl, _ = layout[f"b{i}"]
            grad[w_sl] = (acts[i].T @ delta).ravel()
            grad[b_sl] = delta.sum(axis=0)
            delta = delta @ self.tensor(f"w{i}").T
            if i > 0:
                delta = _act_grad(self.arch.activation, pre[i - 1], acts[i], delta)
        d = self.arch.data_dim
        d_emb = np.zeros((self.arch.vocab_size + 1, self.arch.embed_dim))
        np.add.at(d_emb, y, delta[:, d : d + self.arch.embed_dim])
        grad[layout["embed"][0]] = d_emb.ravel()
        return grad


def init_model(arch: Arch, rng: np.random.Generator) -> DenoiserModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, Uniform(-1, 1) embeddings."""
    params = np.zeros(num_params(arch))
    for name, (sl, shape) in param_layout(arch).items():
        if name == "embed":
            params[sl] = rng.uniform(-1.0, 1.0, size=sl.stop - sl.start)
        elif name.startswith("w"):
            bound = 1.0 / math.sqrt(shape[0])
            params[sl] = rng.uniform(-bound, bound, size=sl.stop - sl.start)
    return DenoiserModel(arch, params)


def predict_noise(model, x_t, y: int, t: int) -> np.ndarray:
    """Single-point noise prediction; returns a vector of length ``data_dim``."""
    y = int(y)
    if not 0 <= y <= model.arch.null_token:
        raise ConfigError(f"prompt token {y} outside vocabulary of size {model.arch.vocab_size}", field="y")
    return model.predict(np.asarray(x_t, dtype=np.float64)[None, :], y, t)[0]


def loss_gradient(model: DenoiserModel, x, y, t, loss_fn, regularizer=None, batch_index=None):
    """Value and parameter gradient of a scalar loss over the model's batch outputs.

    ``loss_fn(outputs) -> (value, d_value/d_outputs)``. ``regularizer(params)``,
    if given, returns ``(value, gradient)`` of an extra term on the raw parameters.
    """
    out, cache = model.forward(x, y, t)
    value, dout = loss_fn(out)
    value = float(value)
    grad = model.backward(cache, dout)
    if regularizer is not None:
        r_val, r_grad = regularizer(model.params)
        value += float(r_val)
        grad = grad + r_grad
    if not math.isfinite(value):
        raise NumericError(f"non-finite loss {value} in batch {batch_index}", batch_index=batch_index)
    return value, grad


def denoising_loss(eps):
    """Mean over the batch of ``||eps - eps_theta||^2``, as a ``loss_fn``."""
    eps = np.asarray(eps, dtype=np.float64)

    def fn(out):
        r = out - eps
        n = out.shape[0]
        return float(np.sum(r * r) / n), 2.0 * r / n

    return fn


def pretrain_base(
    data: dict,
    schedule: NoiseSchedule,
    opt: OptimizerConfig,
    rng_seed: int,
    arch: Arch | None = None,
    cond_dropout: float = 0.1,
    loss_threshold: float | None = None,
    log_every: int = 100,
):
    """Fit a base denoiser by standard epsilon-regression.

    ``data`` maps prompt token -> (n_y, D) array of clean samples. Returns
    ``(model, losses)`` where ``losses`` holds one (step, smoothed loss) entry
    per ``log_every`` steps.
    """
    if not data or any(len(v) == 0 for v in data.values()):
        raise ConfigError("pretraining data must contain at least one sample per prompt", field="data")
    xs = np.concatenate([np.asarray(v, dtype=np.float64) for v in data.values()])
    ys = np.concatenate([np.full(len(v), int(k)) for k, v in data.items()])
    if arch is None:
        arch = Arch(data_dim=xs.shape[1], vocab_size=int(ys.max()) + 1, num_timesteps=schedule.num_timesteps)
    if arch.num_timesteps != schedule.num_timesteps:
        raise ConfigError("arch.num_timesteps must match the schedule", field="num_timesteps")

    rng = np.random.default_rng(rng_seed)
    model = init_model(arch, rng)
    params = model.params.copy()
    adam = Adam(opt)
    losses = []
    window = []
    for step in range(opt.max_steps):
        idx = rng.integers(0, len(xs), size=opt.batch_size)
        x0 = xs[idx]
        y = ys[idx].copy()
        y[rng.random(len(y)) < cond_dropout] = arch.null_token
        t = rng.integers(0, schedule.num_timesteps, size=len(idx))
        eps = rng.standard_normal(x0.shape)
        x_t = forward_diffuse(x0, t, eps, schedule)
        current = DenoiserModel(arch, params)
        value, grad = loss_gradient(current, x_t, y, t, denoising_loss(eps), batch_index=step)
        params = adam.step(params, grad)
        window.append(value)
        if (step + 1) % log_every == 0 or step + 1 == opt.max_steps:
            losses.append((step + 1, float(np.mean(window))))
            window = []
    model = DenoiserModel(arch, params)
    if loss_threshold is not None and losses and losses[-1][1] > loss_threshold:
        warnings.warn(
            f"pretraining finished with loss {losses[-1][1]:.4f} above threshold {loss_threshold}",
            RuntimeWarning,
            stacklevel=2,
        )
    return model, losses
