"""Run configuration as flat ``section.key=value`` text.

Example::

    rng_seed=0
    sail.alpha_mix=0.75
    sail.prompts_per_iter=100,200,200
    dpo.beta_dpo=100.0

Blank lines and ``#`` comments are ignored. Environment variables override
the file: ``SAILFORGE_SEED`` sets ``rng_seed`` and
``SAILFORGE_<SECTION>__<KEY>`` sets ``section.key`` (case-insensitive).
"""

from __future__ import annotations

import dataclasses
import os
import types
import typing
from dataclasses import dataclass, field

from .denoiser import Arch
from .errors import ConfigError
from .evalkit import EvalConfig
from .optim import OptimizerConfig
from .prefdata import TaskConfig
from .sailoop import SailConfig
from .schedule import build_schedule

ENV_PREFIX = "SAILFORGE_"
REQUIRED = ("rng_seed",)


@dataclass
class ScheduleConfig:
    num_timesteps: int = 100
    kind: str = "linear"
    beta_min: float = 1e-4
    beta_max: float = 0.2

    def build(self):
        return build_schedule(self.num_timesteps, self.kind, self.beta_min, self.beta_max)


@dataclass
class ModelConfig:
    embed_dim: int = 8
    time_dim: int = 16
    hidden: tuple = (64, 64)
    activation: str = "tanh"


@dataclass
class PretrainConfig:
    steps: int = 5000
    step_size: float = 2e-3
    batch_size: int = 256
    cond_dropout: float = 0.1
    loss_threshold: float = 1.5

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(step_size=self.step_size, batch_size=self.batch_size, max_steps=self.steps)


def _desk_optimizer():
    return OptimizerConfig(step_size=1e-3, batch_size=128, max_steps=200, beta_dpo=100.0)


def _desk_iter0_optimizer():
    return OptimizerConfig(step_size=1.5e-3, batch_size=128, max_steps=300, beta_dpo=100.0)


def _desk_sail():
    return SailConfig(optimizer=_desk_optimizer(), iter0_optimizer=_desk_iter0_optimizer())


@dataclass
class RunConfig:
    rng_seed: int = 0
    task: TaskConfig = field(default_factory=TaskConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    sail: SailConfig = field(default_factory=_desk_sail)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        self.sync_seed()

    def sync_seed(self):
        """Propagate ``rng_seed`` into the nested configs that carry their own copy."""
        self.sail.rng_seed = self.rng_seed
        self.eval = dataclasses.replace(self.eval, rng_seed=self.rng_seed)

    def arch(self) -> Arch:
        return Arch(
            data_dim=self.task.data_dim,
            vocab_size=self.task.vocab_size,
            embed_dim=self.model.embed_dim,
            time_dim=self.model.time_dim,
            hidden=self.model.hidden,
            activation=self.model.activation,
            num_timesteps=self.schedule.num_timesteps,
        )


# section name -> the dataclass it reads and writes on a RunConfig
_SECTIONS = {
    "task": lambda c: c.task,
    "schedule": lambda c: c.schedule,
    "model": lambda c: c.model,
    "pretrain": lambda c: c.pretrain,
    "sail": lambda c: c.sail,
    "dpo": lambda c: c.sail.optimizer,
    "iter0": lambda c: c.sail.iter0_optimizer,
    "sampler": lambda c: c.sail.sampler,
    "eval": lambda c: c.eval,
}
# fields reachable another way, never written under these sections
_HIDDEN = {"sail": {"optimizer", "iter0_optimizer", "sampler", "rng_seed"}, "eval": {"rng_seed"}}


def _fields(section: str, obj) -> dict:
    hints = typing.get_type_hints(type(obj))
    skip = _HIDDEN.get(section, set())
    return {f.name: hints[f.name] for f in dataclasses.fields(obj) if f.name not in skip}


def _coerce(text: str, hint, key: str, where: str):
    text = text.strip()
    try:
        if typing.get_origin(hint) in (typing.Union, types.UnionType):
            if text.lower() == "none":
                return None
            inner = [a for a in typing.get_args(hint) if a is not type(None)][0]
            return _coerce(text, inner, key, where)
        if hint is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"expected true/false, got {text!r}")
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is tuple:
            return tuple(int(v) for v in text.split(",") if v.strip())
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {exc}", field=key) from exc


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _assign(cfg: RunConfig, key: str, raw: str, where: str):
    if key == "rng_seed":
        cfg.rng_seed = _coerce(raw, int, key, where)
        return
    section, _, name = key.partition(".")
    if section not in _SECTIONS or not name:
        raise ConfigError(f"{where}: unknown key {key!r}", field=key)
    obj = _SECTIONS[section](cfg)
    fields = _fields(section, obj)
    if name not in fields:
        raise ConfigError(f"{where}: unknown key {key!r}", field=key)
    value = _coerce(raw, fields[name], key, where)
    # frozen sections are rebuilt in place on the parent
    if dataclasses.is_dataclass(obj) and obj.__dataclass_params__.frozen:
        setattr(cfg, section, dataclasses.replace(obj, **{name: value}))
    else:
        object.__setattr__(obj, name, value)


def _validate(cfg: RunConfig):
    try:
        for section in ("dpo", "iter0"):
            _SECTIONS[section](cfg).validate()
        cfg.sail.validate()
        cfg.sail.sampler.__post_init__()
        cfg.arch()
        cfg.schedule.build()
    except ConfigError as exc:
        raise ConfigError(f"invalid configuration: {exc}", field=exc.field) from exc
    if cfg.sail.optimizer.beta_dpo != cfg.sail.iter0_optimizer.beta_dpo:
        raise ConfigError("dpo.beta_dpo and iter0.beta_dpo must match", field="beta_dpo")


def parse_config(text: str, env=None, source: str = "<config>") -> RunConfig:
    """Parse config text, then apply environment overrides from ``env``."""
    cfg = RunConfig()
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{lineno}"
        if "=" not in body:
            raise ConfigError(f"{where}: expected key=value, got {body!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key in seen:
            raise ConfigError(f"{where}: duplicate key {key!r} (first set on line {seen[key]})", field=key)
        seen[key] = lineno
        _assign(cfg, key, raw, where)
    for key in REQUIRED:
        if key not in seen and not (env and f"{ENV_PREFIX}SEED" in env):
            raise ConfigError(f"{source}: missing required key {key!r}", field=key)
    apply_env(cfg, env or {})
    cfg.sail.prompts_per_iter = tuple(cfg.sail.prompts_per_iter)
    cfg.sync_seed()
    _validate(cfg)
    return cfg


def apply_env(cfg: RunConfig, env) -> RunConfig:
    for name, raw in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        if rest == "SEED":
            key = "rng_seed"
        elif "__" in rest:
            section, _, leaf = rest.partition("__")
            key = f"{section.lower()}.{leaf.lower()}"
        else:
            continue
        _assign(cfg, key, raw, f"environment {name}")
    cfg.sync_seed()
    return cfg


def load_config(path, env=None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", field="config") from exc
    return parse_config(text, os.environ if env is None else env, source=str(path))


def set_value(cfg: RunConfig, key: str, value) -> RunConfig:
    """Apply one override given as a Python value (used for command-line flags)."""
    _assign(cfg, key, _fmt(value), "command line")
    cfg.sync_seed()
    _validate(cfg)
    return cfg


def snapshot(cfg: RunConfig) -> str:
    """Every key, one per line, in a stable order; re-parses to an equal config."""
    lines = [f"rng_seed={cfg.rng_seed}"]
    for section, get in _SECTIONS.items():
        obj = get(cfg)
        for name in _fields(section, obj):
            lines.append(f"{section}.{name}={_fmt(getattr(obj, name))}")
    return "\n".join(lines) + "\n"


def as_dict(cfg: RunConfig) -> dict:
    """Flat ``key -> value`` mapping, as written by :func:`snapshot`."""
    out = {"rng_seed": cfg.rng_seed}
    for section, get in _SECTIONS.items():
        obj = get(cfg)
        for name in _fields(section, obj):
            value = getattr(obj, name)
            out[f"{section}.{name}"] = list(value) if isinstance(value, tuple) else value
    return out
