import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sailforge.config import RunConfig, apply_env, as_dict, load_config, parse_config, set_value, snapshot
from sailforge.errors import ConfigError


def test_missing_seed_names_the_key():
    with pytest.raises(ConfigError) as err:
        parse_config("sail.alpha_mix=0.5\n", {}, source="run.cfg")
    assert err.value.field == "rng_seed" and "rng_seed" in str(err.value)


def test_minimal_config_uses_desk_defaults():
    cfg = parse_config("rng_seed=7\n", {})
    assert cfg.rng_seed == 7 == cfg.sail.rng_seed == cfg.eval.rng_seed
    assert cfg.sail.prompts_per_iter == (100, 200, 200)
    assert cfg.sail.beta_dpo == 100.0 and cfg.schedule.beta_max == 0.2
    assert snapshot(cfg) == snapshot(RunConfig(rng_seed=7))


def test_errors_carry_line_and_key():
    text = "rng_seed=1\n# comment\n\nsail.alpha_mix=lots\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text, {}, source="x.cfg")
    assert "x.cfg:4" in str(err.value) and err.value.field == "sail.alpha_mix"


@pytest.mark.parametrize(
    "line",
    ["sail.nope=1", "nosection=1", "model=3", "just text", "sail.mixup_enabled=maybe",
     "sail.selection_strategy=median", "sail.n_candidates=1", "dpo.step_size=-1", "schedule.kind=sigmoid",
     "model.activation=gelu", "dpo.beta_dpo=5"],
)
def test_invalid_lines_raise(line):
    with pytest.raises(ConfigError):
        parse_config(f"rng_seed=0\n{line}\n", {})


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("rng_seed=0\nrng_seed=1\n", {})


def test_values_are_typed():
    cfg = parse_config(
        "rng_seed=3\nsail.prompts_per_iter=10,20,20\nsail.mixup_enabled=false\nsampler.null_prompt_token=none\n"
        "model.hidden=4,4,4\nsampler.guidance_scale=1.5  # trailing comment\neval.n_rank_pairs=12\n",
        {},
    )
    assert cfg.sail.prompts_per_iter == (10, 20, 20) and cfg.sail.iters == 3
    assert cfg.sail.mixup_enabled is False and cfg.sail.sampler.null_prompt_token is None
    assert cfg.arch().hidden == (4, 4, 4) and cfg.sail.sampler.guidance_scale == 1.5
    assert cfg.eval.n_rank_pairs == 12


def test_full_scale_prompt_counts_accepted():
    cfg = parse_config("rng_seed=0\nsail.prompts_per_iter=10000,20000,20000\n", {})
    assert cfg.sail.prompts_per_iter == (10000, 20000, 20000)


def test_environment_overrides_file():
    env = {"SAILFORGE_SEED": "11", "SAILFORGE_SAIL__ALPHA_MIX": "0.5", "SAILFORGE_DPO__MAX_STEPS": "9",
           "UNRELATED": "x", "SAILFORGE_IGNORED": "1"}
    cfg = parse_config("rng_seed=1\nsail.alpha_mix=0.25\n", env)
    assert cfg.rng_seed == 11 and cfg.sail.rng_seed == 11
    assert cfg.sail.alpha_mix == 0.5 and cfg.sail.optimizer.max_steps == 9


def test_env_seed_satisfies_required_key():
    assert parse_config("", {"SAILFORGE_SEED": "4"}).rng_seed == 4


def test_bad_env_value_names_the_variable():
    with pytest.raises(ConfigError, match="SAILFORGE_EVAL__MARGIN"):
        apply_env(RunConfig(), {"SAILFORGE_EVAL__MARGIN": "wide"})


def test_set_value_validates():
    cfg = RunConfig()
    set_value(cfg, "sail.selection_strategy", "random")
    assert cfg.sail.selection_strategy == "random"
    with pytest.raises(ConfigError):
        set_value(cfg, "sail.alpha_mix", 1.5)


def test_frozen_eval_section_is_replaced():
    cfg = RunConfig()
    before = cfg.eval
    set_value(cfg, "eval.margin", 0.25)
    assert cfg.eval.margin == 0.25 and before.margin == 0.1


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 2**31),
    st.floats(0.0, 0.99),
    st.sampled_from(["best_worst", "random"]),
    st.lists(st.integers(1, 500), min_size=0, max_size=4),
    st.floats(1e-6, 1.0),
)
def test_snapshot_round_trips(seed, alpha, strategy, sizes, lr):
    cfg = RunConfig(rng_seed=seed)
    set_value(cfg, "sail.alpha_mix", alpha)
    set_value(cfg, "sail.selection_strategy", strategy)
    set_value(cfg, "sail.prompts_per_iter", tuple(sizes))
    set_value(cfg, "dpo.step_size", lr)
    back = parse_config(snapshot(cfg), {})
    assert snapshot(back) == snapshot(cfg)
    assert as_dict(back) == as_dict(cfg)
    assert dataclasses.asdict(back.sail.optimizer) == dataclasses.asdict(cfg.sail.optimizer)


def test_load_config_reads_file_and_reports_missing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("rng_seed=2\nsail.n_candidates=4\n")
    assert load_config(path, env={}).sail.n_candidates == 4
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg", env={})


def test_as_dict_is_json_friendly():
    d = as_dict(RunConfig())
    assert json.loads(json.dumps(d)) == d
    assert d["sail.prompts_per_iter"] == [100, 200, 200]
