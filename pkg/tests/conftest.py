import numpy as np
import pytest

from sailforge.config import RunConfig
from sailforge.denoiser import Arch, init_model
from sailforge.schedule import build_schedule

# criterion number -> (passed, detail); printed once at the end of the session
ACCEPTANCE = {}


def record(number: int, passed: bool, detail: str):
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def schedule():
    return build_schedule()


@pytest.fixture
def small_arch():
    return Arch(data_dim=2, vocab_size=3, embed_dim=4, time_dim=4, hidden=(8, 8), num_timesteps=100)


@pytest.fixture
def model_pair(small_arch):
    return (
        init_model(small_arch, np.random.default_rng(1)),
        init_model(small_arch, np.random.default_rng(2)),
    )


@pytest.fixture(scope="session")
def default_config():
    return RunConfig(rng_seed=0)


# a few-second end-to-end configuration for plumbing tests
TINY = {
    "model.hidden": "16,16",
    "pretrain.steps": "150",
    "pretrain.batch_size": "64",
    "sail.prompts_per_iter": "8",
    "sail.n_candidates": "4",
    "sail.seed_pairs_per_prompt": "2",
    "dpo.max_steps": "5",
    "iter0.max_steps": "5",
    "sampler.num_steps": "10",
    "eval.n_samples_per_prompt": "8",
    "eval.n_rank_pairs": "40",
    "eval.n_diversity_per_prompt": "4",
    "eval.margin": "0.0",
}


def tiny_text(seed=0, **extra) -> str:
    items = {**TINY, **{k.replace("__", "."): str(v) for k, v in extra.items()}}
    return f"rng_seed={seed}\n" + "".join(f"{k}={v}\n" for k, v in items.items())


@pytest.fixture
def tiny_config():
    from sailforge.config import parse_config

    return parse_config(tiny_text(), {})
