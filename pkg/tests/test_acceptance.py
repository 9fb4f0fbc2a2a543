"""Acceptance criteria, one test each, at their stated tolerances.

Every test prints a single ``[PASS]``/``[FAIL]`` line; the lines are also
collected into the ``acceptance criteria`` section of the pytest summary.
"""

import numpy as np
import pytest

from aeroguard import verification as V
from aeroguard.cli import EXIT_OK, main
from aeroguard.config import SimConfig
from aeroguard.plotting import aero_dominant_frequency, read_tidy, settling_report
from aeroguard.sim import write_outputs

pytestmark = pytest.mark.slow


def test_01_aero_oracle_equivalence(report):
    r = V.check_aero_oracle()
    report(1, r)
    assert r.value < 1e-3
    assert r.runtime < 10.0


def test_02_kutta_joukowski_identity(report):
    r = V.check_kutta_joukowski()
    report(2, r)
    assert r.value < 1e-8


def test_03_elliptic_distribution(report):
    r = V.check_elliptic()
    report(3, r)
    assert r.value < 1e-12


def test_04_passive_conservation(report):
    r = V.check_conservation()
    report(4, r)
    assert r.extra["drift"] < 1e-5
    assert r.extra["ratio"] >= 12.0


def test_05_free_fall(report):
    r = V.check_free_fall()
    report(5, r)
    assert r.value < 1e-6


def test_06_observer_convergence(report):
    r = V.check_observer()
    report(6, r)
    assert r.runtime < 5.0
    assert abs(r.extra["rate"] - 10.0) / 10.0 < 0.10
    assert r.extra["ratio_e3"] >= 5.0


def test_07_cancellation_identity(report):
    r = V.check_cancellation()
    report(7, r)
    assert r.value < 1e-10


def test_08_allocation_round_trip(report):
    r = V.check_allocation()
    report(8, r)
    assert r.value < 1e-10 and r.passed


@pytest.fixture(scope="module")
def hover():
    """The 10 s hover scenario, timed end to end (model build included)."""
    return V.check_closed_loop(SimConfig.default())


def test_09_closed_loop_hover(report, hover):
    report(9, hover)
    m = hover.extra["metrics"]
    assert hover.extra["result"].ok
    assert m["rms_position_error"] < 0.01
    assert m["max_attitude_error_deg"] < 3.0
    assert m["saturation_fraction"] < 0.20
    assert hover.runtime < 120.0


def test_10_figure_structure(report, hover, tmp_path):
    cfg = SimConfig.default()
    res = hover.extra["result"]
    csv_path, _ = write_outputs(res, cfg, tmp_path)
    assert main(["plotdata", "gen-forces", "-i", csv_path, "-o", str(tmp_path)]) == EXIT_OK
    assert main(["plotdata", "tracking", "-i", csv_path, "-o", str(tmp_path)]) == EXIT_OK
    series = read_tidy(tmp_path / "gen_forces.csv")
    assert {f"inertial_{k}" for k in ("fx", "fz", "myaw")} <= set(series)
    assert (tmp_path / "gen_forces.png").exists() and (tmp_path / "tracking.png").exists()

    acc = cfg.data["acceptance"]
    name, f, df = aero_dominant_frequency(res.log, acc["window"])
    settle = settling_report(res.log, acc["window"], acc["rms_position_max"], acc["max_attitude_deg"])
    f_gait = cfg.gait_params().frequency
    ok = abs(f - f_gait) <= df and all(v["settled"] for v in settle.values())
    worst = max(settle, key=lambda k: settle[k]["max_error"] / settle[k]["band"])
    report(10, V.CheckResult(
        "figure structure", abs(f - f_gait), df, ok,
        f"{name} peaks at {f:.4g} Hz vs gait {f_gait:g} Hz; six channels settled: "
        f"{all(v['settled'] for v in settle.values())} (tightest {worst} "
        f"{settle[worst]['max_error']:.3g} of band {settle[worst]['band']:.3g})"))
    assert abs(f - f_gait) <= df
    assert all(v["settled"] for v in settle.values())


def test_11_determinism(report, tmp_path):
    r = V.check_determinism(tmpdir=tmp_path)
    report(11, r)
    assert r.passed
