import numpy as np
import pytest

from sailforge.errors import ConfigError
from sailforge.optim import Adam, OptimizerConfig


def test_first_step_moves_each_coordinate_by_step_size():
    # bias-corrected first step is step_size * g / (|g| + epsilon)
    cfg = OptimizerConfig(step_size=0.1, epsilon=1e-12)
    p = np.array([1.0, -2.0, 3.0])
    out = Adam(cfg).step(p, np.array([0.5, -4.0, 1e-3]))
    assert np.allclose(out, p - 0.1 * np.array([1.0, -1.0, 1.0]), atol=1e-10)


def test_step_does_not_mutate_params():
    p = np.ones(3)
    Adam(OptimizerConfig()).step(p, np.ones(3))
    assert np.array_equal(p, np.ones(3))


def test_weight_decay_is_decoupled():
    cfg = OptimizerConfig(step_size=0.1, weight_decay=0.5, epsilon=1e-12)
    out = Adam(cfg).step(np.array([2.0]), np.array([1.0]))
    assert out[0] == pytest.approx(2.0 - 0.1 - 0.1 * 0.5 * 2.0, abs=1e-10)


def test_minimises_a_quadratic():
    cfg = OptimizerConfig(step_size=0.05)
    adam, p = Adam(cfg), np.array([3.0, -2.0])
    for _ in range(2000):
        p = adam.step(p, p)
    assert np.linalg.norm(p) < 1e-2


@pytest.mark.parametrize(
    "kw", [{"step_size": 0.0}, {"beta1": 1.0}, {"beta2": 0.0}, {"batch_size": 0}, {"max_steps": -1},
           {"beta_dpo": 0.0}, {"step_size": float("nan")}, {"weight_decay": -1.0}],
)
def test_invalid_fields_raise(kw):
    with pytest.raises(ConfigError) as err:
        OptimizerConfig(**kw)
    assert err.value.field == next(iter(kw))
