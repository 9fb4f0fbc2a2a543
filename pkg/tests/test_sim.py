import json
import os
import stat

import numpy as np
import pytest

from aeroguard.config import SimConfig
from aeroguard.sim import (
    CoupledPlant,
    TrajectoryLog,
    atomic_write_text,
    gait,
    passive_energy_audit,
    run_scenario,
    write_outputs,
)


def test_gait_derivatives_consistent():
    p = SimConfig.default().gait_params()
    h = 1e-6
    for t in (0.0, 0.013, 0.17):
        q, qd, qdd = gait(t, p)
        np.testing.assert_allclose(qd, (gait(t + h, p)[0] - gait(t - h, p)[0]) / (2 * h), atol=1e-6)
        np.testing.assert_allclose(qdd, (gait(t + h, p)[1] - gait(t - h, p)[1]) / (2 * h), atol=1e-4)
    np.testing.assert_allclose(gait(0.0, p)[0], gait(1.0 / p.frequency, p)[0], atol=1e-12)


def test_initial_state_rotations_orthonormal():
    plant = CoupledPlant(SimConfig.default())
    x = plant.initial_state()
    g, a, _, _ = plant.unpack(x)
    for R in (g.R, a.R):
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-14)


def test_initial_centre_of_mass_moves_with_guard():
    cfg = SimConfig.default()
    plant = CoupledPlant(cfg)
    x = plant.initial_state()
    h = 1e-5
    x1 = plant.advance(0.0, x, 1, np.zeros(4))
    # only gravity-scale acceleration over one step, no kinematic jump
    v = (plant.aerobat_com(plant.cfg.dt_plant, x1) - plant.aerobat_com(0.0, x)) / plant.cfg.dt_plant
    assert np.linalg.norm(v) < 10 * 9.8 * cfg.dt_plant + h


def test_static_passive_release_conserves_energy():
    assert passive_energy_audit(duration=0.2) < 1e-6


def test_log_csv_round_trip(tmp_path):
    tl = TrajectoryLog(["t", "a"], np.array([[0.0, 0.1], [1.0, 1 / 3]]))
    p = tmp_path / "x.csv"
    tl.to_csv(p)
    back = TrajectoryLog.from_csv(p)
    assert back.columns == ["t", "a"]
    np.testing.assert_array_equal(back.data, tl.data)


def test_atomic_write_leaves_no_temporaries(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    atomic_write_text(p, "hello")
    atomic_write_text(p, "again")
    assert p.read_text() == "again"
    assert os.listdir(p.parent) == ["f.txt"]
    assert stat.S_IMODE(os.stat(p).st_mode) & 0o044  # readable by others under default umask


@pytest.fixture(scope="module")
def short_run():
    cfg = SimConfig.default(["sim.duration=0.1"])
    return cfg, run_scenario(cfg)


def test_short_run_logs_every_tick(short_run):
    cfg, res = short_run
    assert res.ok
    assert len(res.log) == cfg.n_ticks + 1
    np.testing.assert_allclose(np.diff(res.log.column("t")), cfg.control_period)
    assert res.metrics["max_orthonormality_error"] < 1e-12


def test_outputs_and_metadata(short_run, tmp_path):
    cfg, res = short_run
    csv_path, meta_path = write_outputs(res, cfg, tmp_path)
    meta = json.loads(open(meta_path).read())
    assert meta["config"] == json.loads(json.dumps(cfg.data))
    assert meta["failure"] is None
    assert "build" in meta and "rms_position_error" in meta["metrics"]
    back = TrajectoryLog.from_csv(csv_path)
    np.testing.assert_array_equal(back.data, res.log.data)


def test_observer_divergence_returns_partial_log():
    cfg = SimConfig.default(["sim.duration=0.1", "sim.sensor_noise_std=1e-3", "observer.ceiling=1e-9"])
    res = run_scenario(cfg)
    assert not res.ok and res.failure_kind == "observer"
    assert 0 < len(res.log) < cfg.n_ticks + 1


def test_integration_blowup_reported():
    cfg = SimConfig.default(["sim.duration=0.1", "aerobat.band_stiffness=1e12"])
    res = run_scenario(cfg)
    assert not res.ok and res.failure_kind == "integration"
