"""Property checks of the models and the closed loop.

Each check returns a :class:`CheckResult`; the ``verify`` CLI subcommand and
the acceptance tests share them.
"""

import functools
import inspect
import time
from dataclasses import dataclass, field

import numpy as np

from .aero import duhamel_response, induced_matrix, kutta_joukowski_residual
from .config import SimConfig
from .control import (
    ObserverState,
    allocate,
    cancellation_law,
    observer_step,
    outer_loop,
    plant_terms,
    tune_observer,
    PlantTerms,
    ControllerConfig,
)
from .integrate import rk4_step
from .sim import CoupledPlant, energy_trace, passive_config, passive_energy_audit, run_scenario
from .vehicle import GuardParams, mixing_matrix


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""
    runtime: float = 0.0
    extra: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: value={self.value:.6g} tol={self.tolerance:.6g} "
                f"({self.runtime:.2f} s) {self.detail}").rstrip()


def _timed(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.runtime = time.perf_counter() - t0
        return res

    return wrapper


# --------------------------------------------------------------------------
# aerodynamics
# --------------------------------------------------------------------------

def input_histories(seed=0, n_tones=12, f_max=20.0):
    """Step, 5 Hz sine and band-limited noise as callables of time."""
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(0.5, f_max, n_tones)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_tones)
    amps = rng.normal(0.0, 1.0, n_tones) / np.sqrt(n_tones)

    def noise(t):
        return np.sum(amps * np.sin(2.0 * np.pi * freqs * t + phases))

    return {
        "step": lambda t: 1.0,
        "sine": lambda t: np.sin(2.0 * np.pi * 5.0 * t),
        "noise": noise,
    }


def march_wing(sys, y_fn, dt, duration, profile=None):
    """RK4 march of the assembled wing with input ``profile * y_fn(t)``.

    Returns the time grid, the strip responses ``beta`` and the effective
    inputs (normal flow plus induced part) at each grid point.
    """
    m = sys.m
    profile = np.ones(m) if profile is None else np.asarray(profile, float)
    n = int(round(duration / dt))
    t = np.arange(n + 1) * dt
    xi = sys.zero_state()
    beta = np.empty((n + 1, m))
    y_eff = np.empty((n + 1, m))

    def f(tt, x):
        return sys.Pi1 @ x + sys.Pi2 @ (profile * y_fn(tt))

    for k in range(n + 1):
        y1 = profile * y_fn(t[k])
        beta[k] = sys.Pi3 @ xi + sys.Pi4 @ y1
        y_eff[k] = y1 + sys.S @ xi[: sys.n]
        if k < n:
            xi = rk4_step(f, t[k], xi, dt)
    return t, beta, y_eff


@_timed
def check_aero_oracle(cfg=None, dt=1e-4, duration=1.0, tol=1e-3):
    """State-space march against the Duhamel quadrature for three inputs."""
    cfg = cfg or SimConfig.default()
    sys = cfg.aero_system()
    w = sys.wagner
    # vary the input along the span so the induced coupling is exercised
    profile = 1.0 + 0.5 * np.cos(sys.geom.theta)
    worst = {}
    for name, y_fn in input_histories().items():
        t, beta, y_eff = march_wing(sys, y_fn, dt, duration, profile)
        err = 0.0
        for i in range(sys.m):
            ref = duhamel_response(y_eff[:, i], t, sys.geom.chord[i], w)
            err = max(err, np.max(np.abs(beta[:, i] - ref)) / np.max(np.abs(ref)))
        worst[name] = err
    value = max(worst.values())
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
    return CheckResult("aero oracle equivalence", value, tol, value < tol, detail, extra=worst)


@_timed
def check_kutta_joukowski(cfg=None, duration=1.0, tol=1e-8):
    """Unsteady Kutta-Joukowski residual at every plant step of a flapping run."""
    cfg = (cfg or SimConfig.default()).with_overrides([("sim.enable_thrusters", False)])
    plant = CoupledPlant(cfg)
    dt = cfg.dt_plant
    n = int(round(duration / dt))
    x = plant.initial_state()
    # hold the combined weight so the pair does not free-fall
    hover = np.array([(plant.gp.mass + plant.ap.mass) * plant.gravity, 0.0, 0.0, 0.0])
    m, nxi = plant.geom.m, plant.nxi
    worst = 0.0
    for k in range(n + 1):
        t = k * dt
        wk = plant.wing_state(t)[0]
        y1, _, _ = plant.aero_outputs(t, x, wk)
        xi = x[36:]
        for side in range(2):
            res = kutta_joukowski_residual(xi[side * nxi:(side + 1) * nxi],
                                           y1[side * m:(side + 1) * m], plant.aero, t)
            worst = max(worst, float(np.max(np.abs(res))))
        if k < n:
            x = plant.advance(t, x, 1, hover)
    return CheckResult("Kutta-Joukowski identity", worst, tol, worst < tol,
                       f"{n + 1} steps")


@_timed
def check_elliptic(cfg=None, tol=1e-12):
    """First Fourier mode alone gives the same induced kinematics on every strip."""
    cfg = cfg or SimConfig.default()
    geom = cfg.strip_geometry()
    S = induced_matrix(geom.theta, geom.m)
    a = np.zeros(geom.m)
    a[0] = 1.0
    y = S @ a
    value = float(max(np.max(np.abs(S[:, 0] - 1.0)), np.max(np.abs(y - y[0]))))
    return CheckResult("elliptic distribution", value, tol, value < tol)


# --------------------------------------------------------------------------
# vehicle
# --------------------------------------------------------------------------

@_timed
def check_conservation(cfg=None, dt=1e-4, tol=1e-5, ratio_min=12.0, ratio_dt=1e-3):
    """Passive energy drift, plus the drift ratio when the step is halved.

    The halving ratio is measured starting from ``ratio_dt``: at ``dt`` the
    drift sits near floating-point roundoff where no truncation order shows.
    """
    drift = passive_energy_audit(cfg, dt=dt)
    coarse = passive_energy_audit(cfg, dt=ratio_dt)
    fine = passive_energy_audit(cfg, dt=0.5 * ratio_dt)
    ratio = coarse / fine
    drift_half = passive_energy_audit(cfg, dt=0.5 * dt)
    ok = drift < tol and ratio >= ratio_min
    detail = (f"drift(dt={dt:g})={drift:.3e}; ratio {ratio_dt:g}->{ratio_dt / 2:g} = {ratio:.2f} "
              f"(>= {ratio_min:g}); ratio {dt:g}->{dt / 2:g} = {drift / max(drift_half, 1e-300):.2f}")
    return CheckResult("passive conservation", drift, tol, ok, detail,
                       extra={"drift": drift, "ratio": ratio, "drift_half": drift_half})


@_timed
def check_free_fall(cfg=None, duration=0.5, tol=1e-6):
    """All forces but gravity off: ``z(t) = z0 - g t^2 / 2``."""
    cfg = (cfg or SimConfig.default()).with_overrides([
        ("sim.enable_thrusters", False), ("sim.enable_aero", False), ("sim.enable_bands", False),
        ("initial.guard_euler", [0.0, 0.0, 0.0]),
    ])
    plant = CoupledPlant(cfg)
    x = plant.initial_state()
    z0g, z0a = x[2], plant.aerobat_com(0.0, x)[2]
    nt = int(round(duration / cfg.control_period))
    for k in range(nt):
        x = plant.advance(k * cfg.control_period, x, cfg.substeps, np.zeros(4))
    g = plant.gravity
    expect = -0.5 * g * duration**2
    # the flapping vehicle's torso oscillates; its centre of mass falls freely
    za = plant.aerobat_com(duration, x)[2]
    err = max(abs(x[2] - z0g - expect), abs(za - z0a - expect))
    return CheckResult("free fall", float(err), tol, err < tol,
                       f"dz={x[2] - z0g:.9f} m, expected {expect:.9f} m")


# --------------------------------------------------------------------------
# observer and control
# --------------------------------------------------------------------------

def scalar_observer_run(omega0, disturbance, duration, dt=1e-3, x3_0=0.0, x3_hat0=1.0):
    """Scalar double integrator with additive disturbance and a tuned observer.

    The plant sits at rest under ``u = -G`` (so ``x1 = x2 = 0``) and the
    observer sees ``z = 0``.  Returns time and the errors ``(e1, e2, e3)``.
    """
    g3 = np.eye(1)
    gains = tune_observer(omega0, g3)
    terms = PlantTerms(g1=np.zeros(1), g2=np.eye(1), g3=g3)
    n = int(round(duration / dt))
    t = np.arange(n + 1) * dt
    obs = ObserverState(np.zeros(1), np.zeros(1), np.array([x3_hat0]))
    err = np.empty((n + 1, 3))
    for k in range(n + 1):
        G = disturbance(t[k])
        err[k] = [obs.x1[0], obs.x2[0], obs.x3[0] - G]
        if k < n:
            # exact plant, u cancels the true disturbance; the observer only
            # sees the commanded u, so its x3 estimate must converge to G
            u = np.array([-disturbance(t[k] + 0.5 * dt)])
            obs = observer_step(obs, np.zeros(1), u, terms, gains, dt)
    return t, err


@_timed
def check_observer(omega0=10.0, tol_rate=0.10, ratio_min=5.0, f_dist=0.5, amp=1.0):
    """Decay rate of the undisturbed error and the effect of tripling the bandwidth."""
    t, err = scalar_observer_run(omega0, lambda s: 0.0, 5.0)
    norm = np.linalg.norm(err, axis=1)
    sel = (t >= 3.0) & (t <= 5.0)
    rate = -np.polyfit(t[sel], np.log(norm[sel]), 1)[0]
    rate_err = abs(rate - omega0) / omega0

    def peaks(w0):
        d = lambda s: amp * np.sin(2.0 * np.pi * f_dist * s)
        tt, e = scalar_observer_run(w0, d, 6.0, x3_hat0=0.0)
        late = tt >= 2.0
        return np.max(np.abs(e[late, 2])), np.max(np.abs(e[late, 0]))

    e3a, e1a = peaks(omega0)
    e3b, e1b = peaks(3.0 * omega0)
    ratio3 = e3a / e3b
    ratio1 = e1a / e1b
    ok = rate_err < tol_rate and ratio3 >= ratio_min
    detail = (f"decay rate {rate:.3f} vs omega0 {omega0:g} ({100 * rate_err:.1f}%); "
              f"peak |e3| ratio at 3x omega0 = {ratio3:.2f} (need >= {ratio_min:g}); "
              f"peak |e1| ratio = {ratio1:.1f}")
    return CheckResult("observer convergence", rate_err, tol_rate, ok, detail,
                       extra={"rate": rate, "ratio_e3": ratio3, "ratio_e1": ratio1})


@_timed
def check_cancellation(n_steps=2000, dt=1e-3, tol=1e-10, seed=0):
    """Feedback linearization with exact disturbance knowledge yields ``x2_dot = u0``."""
    gp = GuardParams()
    cfg = ControllerConfig()
    rng = np.random.default_rng(seed)
    x1 = np.concatenate([rng.normal(0, 0.05, 3), rng.normal(0, 0.2, 3)])
    x2 = rng.normal(0, 0.2, 6)
    amp = rng.normal(0, 0.3, 6)
    worst = 0.0
    for k in range(n_steps):
        t = k * dt
        x3 = amp * np.sin(2.0 * np.pi * 5.0 * t + np.arange(6))
        terms = plant_terms(x1, x2, gp)
        u0 = outer_loop(x1, x2, cfg)
        u, _, _ = cancellation_law(u0, terms, x3)
        x2dot = terms.g1 + terms.g2 @ u + terms.g3 @ x3
        worst = max(worst, float(np.max(np.abs(x2dot - u0))))
        x1 = x1 + dt * x2
        x2 = x2 + dt * x2dot
    return CheckResult("cancellation identity", worst, tol, worst < tol, f"{n_steps} steps")


@_timed
def check_allocation(n_samples=1000, tol=1e-10, seed=0):
    """Round trip of in-bounds minimum-norm thrusts through mixing and allocation."""
    gp = GuardParams()
    M = mixing_matrix(gp)
    P = np.linalg.pinv(M)
    rng = np.random.default_rng(seed)
    worst = 0.0
    count = 0
    while count < n_samples:
        u = P @ (M @ rng.uniform(gp.f_min, gp.f_max, 6))
        if np.any(u < gp.f_min) or np.any(u > gp.f_max):
            continue
        count += 1
        back = allocate(M @ u, gp).command
        worst = max(worst, float(np.max(np.abs(back - u))))
    rank = int(np.linalg.matrix_rank(M))
    return CheckResult("allocation round trip", worst, tol, worst < tol and rank == 4,
                       f"mixing rank {rank}")


# --------------------------------------------------------------------------
# closed loop
# --------------------------------------------------------------------------

@_timed
def check_closed_loop(cfg=None, result=None):
    """Hover from a 5 cm / 5 degree offset over the configured duration."""
    cfg = cfg or SimConfig.default()
    res = result if result is not None else run_scenario(cfg)
    acc = cfg.data["acceptance"]
    m = res.metrics
    checks = {
        "rms_position_error": m["rms_position_error"] < acc["rms_position_max"],
        "max_attitude_error_deg": m["max_attitude_error_deg"] < acc["max_attitude_deg"],
        "saturation_fraction": m["saturation_fraction"] < acc["max_saturation_fraction"],
        "completed": res.ok,
    }
    detail = (f"rms pos {1000 * m['rms_position_error']:.3f} mm, max att {m['max_attitude_error_deg']:.3f} deg, "
              f"saturation {100 * m['saturation_fraction']:.1f}%, failure={res.failure}")
    return CheckResult("closed-loop hover", m["rms_position_error"], acc["rms_position_max"],
                       all(checks.values()), detail, extra={"metrics": m, "result": res})


@_timed
def check_determinism(cfg=None, tmpdir=None):
    """Two runs of the same config and seed write byte-identical CSV."""
    import tempfile
    import os

    cfg = (cfg or SimConfig.default()).with_overrides([
        ("sim.duration", 0.5), ("sim.sensor_noise_std", 1e-4), ("sim.seed", 7)])
    blobs = []
    with tempfile.TemporaryDirectory(dir=tmpdir) as d:
        for i in range(2):
            path = os.path.join(d, f"run{i}.csv")
            run_scenario(cfg).log.to_csv(path)
            with open(path, "rb") as fh:
                blobs.append(fh.read())
    same = blobs[0] == blobs[1]
    return CheckResult("determinism", 0.0 if same else 1.0, 0.0, same,
                       f"{len(blobs[0])} bytes per CSV")


VERIFY_GROUPS = {
    "aero-oracle": (check_aero_oracle, check_kutta_joukowski, check_elliptic),
    "conservation": (check_conservation, check_free_fall),
    "observer": (check_observer, check_cancellation, check_allocation),
    "closed-loop": (check_closed_loop, check_determinism),
}


def run_group(name, cfg=None):
    groups = VERIFY_GROUPS if name == "all" else {name: VERIFY_GROUPS[name]}
    out = []
    for fns in groups.values():
        for fn in fns:
            kwargs = {"cfg": cfg} if "cfg" in inspect.signature(fn).parameters else {}
            out.append(fn(**kwargs))
    return out
