import numpy as np
import pytest

from aeroguard.config import SimConfig
from aeroguard.sim import CoupledPlant


@pytest.fixture(scope="module")
def plant():
    return CoupledPlant(SimConfig.default([("sim.duration", 0.01)]))


def _perturbed_state(plant, rng):
    x = plant.initial_state()
    x[3:6] += rng.normal(0, 0.2, 3)
    x[15:18] += rng.normal(0, 0.5, 3)
    x[21:24] += rng.normal(0, 0.2, 3)
    x[33:36] += rng.normal(0, 0.5, 3)
    x[36:] = rng.normal(0, 0.01, x.size - 36)
    return x


def test_compiled_path_enabled_by_default(plant):
    assert plant.compiled


@pytest.mark.parametrize("k", [0, 7, 1234, 3999])
def test_compiled_derivative_matches_reference(plant, rng, k):
    t = k * plant._h
    x = _perturbed_state(plant, rng)
    thrust = np.array([1.3, 0.01, -0.02, 0.005])
    ref = plant.derivative(t, x, thrust)
    fast = plant.derivative_compiled(t, x, thrust)
    scale = np.maximum(np.abs(ref), 1.0)
    assert np.max(np.abs(fast - ref) / scale) < 1e-10


def test_compiled_advance_matches_reference_steps(rng):
    cfg = SimConfig.default([("sim.duration", 0.01)])
    fast = CoupledPlant(cfg)
    slow = CoupledPlant(cfg.with_overrides([("sim.compiled", False)]))
    assert not slow.compiled
    x = fast.initial_state()
    thrust = np.array([1.37, 0.0, 0.0, 0.0])
    xf = fast.advance(0.0, x.copy(), 20, thrust)
    xs = slow.advance(0.0, x.copy(), 20, thrust)
    np.testing.assert_allclose(xf, xs, rtol=1e-9, atol=1e-12)


def test_periodic_table_covers_one_gait_period(plant):
    # 5 Hz gait on a 5e-5 s half-step grid
    assert plant._period == 4000
    assert plant._kernel_table().shape[0] == 4000
