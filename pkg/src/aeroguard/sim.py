"""Closed-loop scenario orchestration.

The plant (guard, vehicle, both wing aero states) is integrated with RK4 at
``dt_plant``; the observer and controller run at the control rate with the
thrust command held between ticks.
"""

import json
import logging
import os
import subprocess
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .aero import decompose_tld, strip_forces
from .config import SimConfig
from .control import (
    ObserverDivergenceError,
    ObserverState,
    allocate,
    applied_generalized_wrench,
    body_wrench_request,
    control_law,
    level_g3,
    measurement_from_state,
    observer_step,
    plant_terms,
    tune_observer,
)
from .geom import cross, hat, orthonormalize, rotation_to_euler, wrap_angle
from .integrate import IntegrationError, rk4_step
from .vehicle import (
    AerobatState,
    BiasCoefficients,
    GuardState,
    WingModel,
    aerobat_kinetic_energy,
    aerobat_potential_energy,
    coupling_matrix,
    elastic_wrench,
    guard_kinetic_energy,
    mass_matrix,
    mixing_matrix,
    relative_state,
    total_momentum,
)

log = logging.getLogger(__name__)

__all__ = ["CoupledPlant", "TrajectoryLog", "ScenarioResult", "gait", "rk4_step",
           "run_scenario", "passive_energy_audit", "write_outputs"]


def gait(t, p):
    """Joint angles, rates and accelerations ``(q_w, q_w_dot, q_w_ddot)``.

    ``alpha3 = mean_p + A_p sin(2 pi f t)``;
    ``alpha4 = mean_d + A_d sin(2 pi f t + phase)``.
    """
    w = 2.0 * np.pi * p.frequency
    ph = np.array([w * t, w * t + p.fold_phase])
    amp = np.array([p.proximal_amplitude, p.distal_amplitude])
    mean = np.array([p.proximal_mean, p.distal_mean])
    s, c = np.sin(ph), np.cos(ph)
    return mean + amp * s, amp * w * c, -amp * w * w * s


# state layout -------------------------------------------------------------
_PG, _VG, _RG, _WG = slice(0, 3), slice(3, 6), slice(6, 15), slice(15, 18)
_PA, _VA, _RA, _WA = slice(18, 21), slice(21, 24), slice(24, 33), slice(33, 36)
_N_BODY = 36


class CoupledPlant:
    """Guard + suspended vehicle + wing aerodynamics as one ODE."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.gp = cfg.guard_params()
        self.ap = cfg.aerobat_params()
        self.gait_params = cfg.gait_params()
        self.gravity = float(cfg.sim["gravity"])
        self.aero_on = bool(cfg.sim["enable_aero"])
        self.bands_on = bool(cfg.sim["enable_bands"])
        self.aero = cfg.aero_system()
        self.geom = self.aero.geom
        self.wings = WingModel(self.ap, self.geom.s)
        self.nxi = self.aero.n_states
        self.n_state = _N_BODY + 2 * self.nxi
        self.rho = float(cfg.get("aero.rho"))
        self.cd0 = float(cfg.get("aero.cd0"))
        self.cd90 = float(cfg.get("aero.cd90"))
        self.mixing = mixing_matrix(self.gp)
        self.JG = self.gp.inertia
        self.JG_inv = np.linalg.inv(self.JG)
        self.chord2 = np.tile(self.geom.chord, 2)
        self.width2 = np.tile(self.geom.width, 2)
        self._setup_cache()

    # -- wing kinematics cache ---------------------------------------------

    def _setup_cache(self):
        # RK4 samples the gait on a half-step grid; a periodic gait whose
        # period is a whole number of half steps is cached over one period.
        self._h = 0.5 * self.cfg.dt_plant
        f = self.gait_params.frequency
        n = 1.0 / (f * self._h) if f > 0 else 1.0
        static = self.gait_params.proximal_amplitude == 0 and self.gait_params.distal_amplitude == 0
        if static:
            self._period = 1
        elif abs(n - round(n)) < 1e-9 * n:
            self._period = int(round(n))
        else:
            self._period = None
        self._cache = {}

    def _compute_wing_state(self, t):
        q, qd, qdd = gait(t, self.gait_params)
        wk = self.wings.kinematics(q, qd, qdd)
        Du = mass_matrix(wk, self.ap)
        return (wk, np.linalg.inv(Du), coupling_matrix(wk) @ qdd, Du,
                BiasCoefficients.from_kinematics(wk, self.ap))

    def wing_state(self, t):
        """Cached ``(kinematics, D_u^-1, D_ua q_ddot, D_u, bias)`` at time ``t``."""
        k = round(t / self._h)
        on_grid = abs(k * self._h - t) <= 1e-9 * self._h + 1e-15
        if on_grid and self._period is not None:
            key = k % self._period
            hit = self._cache.get(key)
            if hit is None:
                hit = self._cache[key] = self._compute_wing_state(key * self._h)
            return hit
        hit = self._cache.get(("t", t))
        if hit is None:
            if len(self._cache) > 64:
                self._cache.clear()
            hit = self._cache[("t", t)] = self._compute_wing_state(t)
        return hit

    # -- state helpers -----------------------------------------------------

    def unpack(self, x):
        g = GuardState(p=x[_PG], R=x[_RG].reshape(3, 3), v=x[_VG], omega=x[_WG])
        a = AerobatState(p=x[_PA], R=x[_RA].reshape(3, 3), v=x[_VA], omega=x[_WA])
        xi = x[_N_BODY:]
        return g, a, xi[: self.nxi], xi[self.nxi :]

    def pack(self, guard, aerobat, xi_left=None, xi_right=None):
        x = np.zeros(self.n_state)
        x[_PG], x[_VG], x[_RG], x[_WG] = guard.p, guard.v, np.asarray(guard.R).ravel(), guard.omega
        x[_PA], x[_VA], x[_RA], x[_WA] = aerobat.p, aerobat.v, np.asarray(aerobat.R).ravel(), aerobat.omega
        if xi_left is not None:
            x[_N_BODY : _N_BODY + self.nxi] = xi_left
        if xi_right is not None:
            x[_N_BODY + self.nxi :] = xi_right
        return x

    def orthonormalize(self, x):
        x = x.copy()
        x[_RG] = orthonormalize(x[_RG].reshape(3, 3)).ravel()
        x[_RA] = orthonormalize(x[_RA].reshape(3, 3)).ravel()
        return x

    # -- physics -----------------------------------------------------------

    def bands(self, x):
        if not self.bands_on:
            z = np.zeros(3)
            return z, z, z, z, 0.0
        RG = x[_RG].reshape(3, 3)
        RA = x[_RA].reshape(3, 3)
        ew = elastic_wrench(x[_PG], RG, x[_PA], RA, self.gp, self.ap,
                            x[_VG], x[_WG], x[_VA], x[_WA])
        return ew.force_guard, ew.moment_guard, ew.force_aerobat, ew.moment_aerobat, ew.energy

    def aero_outputs(self, t, x, wk):
        """Strip inputs, responses and world forces for both wings."""
        RA = x[_RA].reshape(3, 3)
        local = cross(x[_WA], wk.strip_rho) + wk.strip_rho_dot
        v_strip = x[_VA] + local @ RA.T
        u_rel = -v_strip
        cdir = wk.strip_chord_dir @ RA.T
        sdir = wk.strip_span_dir @ RA.T
        ndir = wk.strip_normal @ RA.T
        y1 = np.sum(u_rel * ndir, axis=1)
        xi = x[_N_BODY:]
        m = self.geom.m
        s = self.aero
        xiL, xiR = xi[: self.nxi], xi[self.nxi :]
        beta = np.concatenate([s.Pi3 @ xiL + s.Pi4 @ y1[:m], s.Pi3 @ xiR + s.Pi4 @ y1[m:]])
        forces = strip_forces(beta, u_rel, cdir, sdir, ndir, self.chord2, self.width2,
                              rho=self.rho, cd0=self.cd0, cd90=self.cd90)
        return y1, beta, forces

    def derivative(self, t, x, thrust):
        """``x_dot`` with the body thrust wrench ``thrust = (f, m_x, m_y, m_z)`` held."""
        dx = np.empty_like(x)
        RG = x[_RG].reshape(3, 3)
        RA = x[_RA].reshape(3, 3)
        wG, wA = x[_WG], x[_WA]
        wk, Du_inv, dua_qdd, _, bias = self.wing_state(t)
        FG, MG, FA, MA, _ = self.bands(x)

        # guard
        dx[_PG] = x[_VG]
        dx[_VG] = (RG[:, 2] * thrust[0] + FG) / self.gp.mass
        dx[_VG][2] -= self.gravity
        dx[_RG] = (RG @ hat(wG)).ravel()
        dx[_WG] = self.JG_inv @ (thrust[1:] + MG - cross(wG, self.JG @ wG))

        # vehicle
        rhs = -dua_qdd - bias.evaluate(RA, wA, self.gravity)
        rhs[:3] += RA.T @ FA
        rhs[3:] += MA
        if self.aero_on:
            y1, _, forces = self.aero_outputs(t, x, wk)
            fb = forces.force @ RA
            rhs[:3] += fb.sum(axis=0)
            rhs[3:] += cross(wk.strip_rho, fb).sum(axis=0)
            m = self.geom.m
            s = self.aero
            xi = x[_N_BODY:]
            if s.e_variant == "autonomous":
                dx[_N_BODY : _N_BODY + self.nxi] = s.Pi1 @ xi[: self.nxi] + s.Pi2 @ y1[:m]
                dx[_N_BODY + self.nxi :] = s.Pi1 @ xi[self.nxi :] + s.Pi2 @ y1[m:]
            else:
                from .aero import aero_derivative

                dx[_N_BODY : _N_BODY + self.nxi] = aero_derivative(xi[: self.nxi], y1[:m], s, t)
                dx[_N_BODY + self.nxi :] = aero_derivative(xi[self.nxi :], y1[m:], s, t)
        else:
            dx[_N_BODY:] = 0.0
        nu = Du_inv @ rhs
        dx[_PA] = x[_VA]
        dx[_VA] = RA @ nu[:3]
        dx[_RA] = (RA @ hat(wA)).ravel()
        dx[_WA] = nu[3:]
        if not np.all(np.isfinite(dx)):
            raise IntegrationError("non-finite derivative", t)
        return dx

    # -- compiled path -----------------------------------------------------

    @property
    def compiled(self):
        return (bool(self.cfg.sim.get("compiled", True)) and self._period is not None
                and self.aero.e_variant == "autonomous")

    def _kernel_table(self):
        if getattr(self, "_table", None) is None:
            from .kernels import pack_wing_entry

            rows = []
            for key in range(self._period):
                wk, Du_inv, dua, _, bias = self.wing_state(key * self._h)
                rows.append(pack_wing_entry(wk, Du_inv, dua, bias))
            self._table = np.ascontiguousarray(rows)
            ap = self.ap
            scal = np.array([
                self.gp.mass, self.gravity, ap.band_stiffness / len(ap.band_attach),
                ap.band_rest_length, ap.band_damping, float(self.bands_on),
                float(self.aero_on), self.rho, self.cd0, self.cd90,
            ])
            s = self.aero
            c = np.ascontiguousarray
            self._kargs = (scal, c(self.JG), c(self.JG_inv), c(self.gp.band_anchors),
                           c(ap.band_attach), c(s.Pi1), c(s.Pi2), c(s.Pi3), c(s.Pi4),
                           c(self.chord2), c(self.width2))
        return self._table

    def derivative_compiled(self, t, x, thrust):
        """Compiled evaluation of :meth:`derivative` on the half-step grid."""
        from .kernels import rhs

        table = self._kernel_table()
        key = round(t / self._h) % self._period
        out = np.empty_like(x)
        rhs(np.ascontiguousarray(x), np.asarray(thrust, float), table[key], *self._kargs, out)
        return out

    def advance(self, t, x, nsub, thrust):
        """``nsub`` plant steps of ``dt_plant`` starting at ``t``."""
        dt = self.cfg.dt_plant
        if not self.compiled:
            for j in range(nsub):
                x = self.step(t + j * dt, x, dt, thrust)
            return x
        from .kernels import rk4_substeps

        table = self._kernel_table()
        k0 = int(round(t / self._h))
        x_new, done = rk4_substeps(np.ascontiguousarray(x), k0, nsub, dt,
                                   np.asarray(thrust, float), table, self._period, *self._kargs)
        if done < nsub:
            raise IntegrationError("non-finite state in plant step", t + (done + 1) * dt)
        return x_new

    def step(self, t, x, dt, thrust):
        return rk4_step(lambda tt, xx: self.derivative(tt, xx, thrust), t, x, dt,
                        post=self.orthonormalize)

    # -- diagnostics -------------------------------------------------------

    def energy(self, t, x):
        g, a, _, _ = self.unpack(x)
        wk = self.wing_state(t)[0]
        _, _, _, _, v_band = self.bands(x)
        ke = guard_kinetic_energy(g, self.gp) + aerobat_kinetic_energy(a, wk, self.ap)
        pe = self.gravity * self.gp.mass * g.p[2] + aerobat_potential_energy(a, wk, self.ap, self.gravity)
        return ke, pe + v_band, v_band

    def aerobat_com(self, t, x):
        """World position of the vehicle centre of mass (torso plus wings)."""
        bias = self.wing_state(t)[4]
        return x[_PA] + x[_RA].reshape(3, 3) @ bias.c / bias.M

    def momentum(self, t, x):
        g, a, _, _ = self.unpack(x)
        return total_momentum(g, a, self.wing_state(t)[0], self.gp, self.ap)

    def initial_state(self):
        ini = self.cfg.data["initial"]
        from .geom import euler_to_rotation

        RG = euler_to_rotation(ini["guard_euler"])
        pG = np.asarray(ini["guard_position"], float)
        guard = GuardState(p=pG, R=RG, v=np.asarray(ini["guard_velocity"], float),
                           omega=np.asarray(ini["guard_omega"], float))
        offset = np.asarray(ini["aerobat_offset"], float)
        pA = pG.copy()
        if ini["aerobat_at_equilibrium"] and self.bands_on and self.ap.band_stiffness > 0:
            pA = pA + np.array([0.0, 0.0, -self.ap.mass * self.gravity / self.ap.band_stiffness])
        pA = pA + RG @ offset
        # start with the vehicle centre of mass (not the torso) moving with the guard
        bias = self.wing_state(0.0)[4]
        vA = guard.v - RG @ (np.cross(guard.omega, bias.c) + bias.c_dot) / bias.M
        aerobat = AerobatState(p=pA, R=RG.copy(), v=vA, omega=guard.omega.copy())
        return self.pack(guard, aerobat)


# --------------------------------------------------------------------------
# trajectory log
# --------------------------------------------------------------------------

@dataclass
class TrajectoryLog:
    columns: list
    data: np.ndarray

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, float)) if len(self.data) else np.zeros((0, len(self.columns)))
        self._index = {c: i for i, c in enumerate(self.columns)}

    def __len__(self):
        return self.data.shape[0]

    def column(self, name):
        return self.data[:, self._index[name]]

    def columns_like(self, prefix):
        return [c for c in self.columns if c.startswith(prefix)]

    def to_csv(self, path):
        buf = ",".join(self.columns) + "\n"
        lines = [",".join(repr(float(v)) for v in row) for row in self.data]
        atomic_write_text(path, buf + "\n".join(lines) + ("\n" if lines else ""))

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip()
            if not header:
                raise ValueError(f"{path} is empty")
            columns = header.split(",")
            rows = [list(map(float, line.split(","))) for line in fh if line.strip()]
        return cls(columns=columns, data=np.array(rows) if rows else np.zeros((0, len(columns))))


def atomic_write_text(path, text):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def log_columns(n_strips_total, with_strips=True):
    cols = ["t"]
    cols += [f"guard_{k}" for k in ("x", "y", "z", "roll", "pitch", "yaw", "vx", "vy", "vz", "wx", "wy", "wz")]
    cols += [f"rel_{k}" for k in ("x", "y", "z", "roll", "pitch", "yaw", "vx", "vy", "vz")]
    cols += ["alpha3", "alpha4", "alpha3_dot", "alpha4_dot"]
    cols += [f"x{i}hat_{j}" for i in (1, 2, 3) for j in range(6)]
    cols += [f"x3_{j}" for j in range(6)]
    cols += [f"u{i}" for i in range(1, 7)]
    cols += ["f_ach", "mx_ach", "my_ach", "mz_ach", "saturated", "achievable"]
    cols += [f"setpoint_{k}" for k in ("x", "y", "z", "roll", "pitch", "yaw")]
    cols += [f"inertial_{j}" for j in range(6)] + [f"aero_{j}" for j in range(6)]
    cols += ["aero_Fx", "aero_Fy", "aero_Fz"]
    cols += ["kinetic_energy", "potential_energy", "total_energy", "orth_err"]
    if with_strips:
        for i in range(n_strips_total):
            cols += [f"strip{i}_T", f"strip{i}_L", f"strip{i}_D"]
    return cols


def xi_columns(nxi):
    return [f"xiL_{i}" for i in range(nxi)] + [f"xiR_{i}" for i in range(nxi)]


@dataclass
class ScenarioResult:
    log: TrajectoryLog
    metrics: dict
    failure: str = None
    failure_kind: str = None
    events: list = field(default_factory=list)

    @property
    def ok(self):
        return self.failure is None


def _measure(x, rng, noise):
    z, x2 = measurement_from_state(x[_PG], x[_RG].reshape(3, 3), x[_VG], x[_WG])
    if noise > 0.0:
        z = z + rng.normal(0.0, noise, size=6)
    return z, x2


def run_scenario(cfg, progress=None):
    """Run the closed loop described by ``cfg`` and return log plus metrics.

    Integration failures and observer divergence are caught: the partial log
    is returned with ``failure`` set.
    """
    plant = CoupledPlant(cfg)
    gp = plant.gp
    sim = cfg.sim
    rng = np.random.default_rng(int(sim["seed"]))
    noise = float(sim["sensor_noise_std"])
    thrusters = bool(sim["enable_thrusters"])
    ctrl = cfg.controller_config()
    gains = tune_observer(float(cfg.get("observer.omega0")), level_g3(gp))
    ceiling = float(cfg.get("observer.ceiling"))
    Tc, dt, nsub, nticks = cfg.control_period, cfg.dt_plant, cfg.substeps, cfg.n_ticks
    with_strips = bool(sim["log_strips"])
    columns = log_columns(2 * plant.geom.m, with_strips) + xi_columns(plant.nxi)

    x = plant.initial_state()
    rows = []
    events = []
    failure = kind = None
    obs = None
    last = None
    setpoint = np.concatenate([ctrl.setpoint, [0.0, 0.0, ctrl.yaw_setpoint]])
    zero6 = np.zeros(6)
    for k in range(nticks + 1):
        t = k * Tc
        try:
            z, x2 = _measure(x, rng, noise)
            if thrusters:
                terms = plant_terms(z, x2, gp, plant.gravity)
                if obs is None:
                    obs = ObserverState(z.copy(), x2.copy(), np.zeros(6))
                out = control_law(obs, z, x2, terms, ctrl, last)
                if not out.ok:
                    events.append((t, "ill-conditioned g2"))
                last = out
                RG = x[_RG].reshape(3, 3)
                alloc = allocate(body_wrench_request(out.wrench, RG), gp)
                u = alloc.command
                achieved = alloc.achieved
                u_gen = applied_generalized_wrench(achieved, RG)
                if alloc.saturated:
                    events.append((t, "saturation"))
            else:
                u = np.zeros(6)
                achieved = np.zeros(4)
                alloc = None
                out = None
            rows.append(_log_row(plant, t, x, obs, out, u, achieved, alloc, setpoint, with_strips))
            if progress is not None:
                progress(k, nticks)
            if k == nticks:
                break
            thrust = plant.mixing @ u
            x = plant.advance(t, x, nsub, thrust)
            if thrusters:
                obs = observer_step(obs, z, u_gen, terms, gains, Tc, ceiling)
        except IntegrationError as exc:
            failure, kind = str(exc), "integration"
            break
        except ObserverDivergenceError as exc:
            failure, kind = f"{exc} at t={t:.6g} s", "observer"
            break
    tl = TrajectoryLog(columns=columns, data=np.array(rows) if rows else np.zeros((0, len(columns))))
    metrics = summarize(tl, cfg)
    if failure:
        log.error("scenario failed: %s", failure)
    return ScenarioResult(log=tl, metrics=metrics, failure=failure, failure_kind=kind, events=events)


def _log_row(plant, t, x, obs, out, u, achieved, alloc, setpoint, with_strips):
    g, a, _, _ = plant.unpack(x)
    q_w, q_w_dot, _ = gait(t, plant.gait_params)
    wk = plant.wing_state(t)[0]
    rel = relative_state(g, a, q_w, q_w_dot)
    euler = rotation_to_euler(g.R)
    FG, MG, _, _, _ = plant.bands(x)
    x3_true = np.concatenate([FG, MG])
    ke, pe, _ = plant.energy(t, x)
    orth = max(np.linalg.norm(g.R.T @ g.R - np.eye(3)), np.linalg.norm(a.R.T @ a.R - np.eye(3)))
    row = [t, *g.p, *euler, *g.v, *g.omega, *rel.p, *rel.euler, *rel.v, *q_w, *q_w_dot]
    if obs is not None:
        row += [*obs.x1, *obs.x2, *obs.x3]
    else:
        row += [0.0] * 18
    row += [*x3_true, *u, *achieved]
    row += [float(alloc.saturated) if alloc else 0.0, float(alloc.achievable) if alloc else 1.0]
    sp = setpoint.copy()
    if out is not None:
        sp[3], sp[4] = out.tilt
    row += [*sp]
    row += [*(out.inertial if out else np.zeros(6)), *(out.aerodynamic if out else np.zeros(6))]
    if plant.aero_on:
        _, _, forces = plant.aero_outputs(t, x, wk)
        row += [*forces.total]
    else:
        forces = None
        row += [0.0, 0.0, 0.0]
    row += [ke, pe, ke + pe, orth]
    if with_strips:
        n = 2 * plant.geom.m
        if forces is not None:
            T, L, D = decompose_tld(forces, a.R)
        else:
            T = L = D = np.zeros(n)
        row += list(np.column_stack([T, L, D]).ravel())
    row += list(x[_N_BODY:])
    return row


def summarize(tl, cfg):
    """Summary metrics over the final acceptance window."""
    if len(tl) == 0:
        return {}
    acc = cfg.data["acceptance"]
    t = tl.column("t")
    win = t >= t[-1] - float(acc["window"]) - 1e-12
    ctrl = cfg.controller_config()
    pos = np.column_stack([tl.column(f"guard_{k}") for k in ("x", "y", "z")]) - ctrl.setpoint
    pos_err = np.linalg.norm(pos, axis=1)
    att = np.column_stack([tl.column("guard_roll"), tl.column("guard_pitch"),
                           wrap_angle(tl.column("guard_yaw") - ctrl.yaw_setpoint)])
    att_err = np.degrees(np.max(np.abs(att), axis=1))
    x3h = np.column_stack([tl.column(f"x3hat_{j}") for j in range(6)])
    x3 = np.column_stack([tl.column(f"x3_{j}") for j in range(6)])
    x1h = np.column_stack([tl.column(f"x1hat_{j}") for j in range(6)])
    x1 = np.column_stack([pos + ctrl.setpoint, tl.column("guard_roll"), tl.column("guard_pitch"),
                          tl.column("guard_yaw")])
    e1 = x1h - x1
    e1[:, 3:] = wrap_angle(e1[:, 3:])
    return {
        "rows": int(len(tl)),
        "t_end": float(t[-1]),
        "rms_position_error": float(np.sqrt(np.mean(pos_err[win] ** 2))),
        "max_position_error_window": float(np.max(pos_err[win])),
        "max_attitude_error_deg": float(np.max(att_err[win])),
        "max_attitude_error_deg_full": float(np.max(att_err)),
        "saturation_fraction": float(np.mean(tl.column("saturated"))),
        "observer_e1_max": float(np.max(np.linalg.norm(e1, axis=1))),
        "observer_e3_force_rms": float(np.sqrt(np.mean(np.sum((x3h[win, :3] - x3[win, :3]) ** 2, axis=1)))),
        "observer_e3_moment_rms": float(np.sqrt(np.mean(np.sum((x3h[win, 3:] - x3[win, 3:]) ** 2, axis=1)))),
        "max_orthonormality_error": float(np.max(tl.column("orth_err"))),
    }


def git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=os.path.dirname(os.path.abspath(__file__)),
                             capture_output=True, text=True, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_outputs(result, cfg, out_dir, stem="trajectory"):
    """Write ``<stem>.csv`` and the ``<stem>.meta.json`` sidecar atomically."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    meta_path = os.path.join(out_dir, f"{stem}.meta.json")
    result.log.to_csv(csv_path)
    meta = {
        "schema_version": cfg.data["schema_version"],
        "log_schema_version": 1,
        "build": git_describe(),
        "config": cfg.data,
        "metrics": result.metrics,
        "failure": result.failure,
        "failure_kind": result.failure_kind,
        "n_saturation_events": sum(1 for _, e in result.events if e == "saturation"),
    }
    atomic_write_text(meta_path, json.dumps(meta, indent=2, sort_keys=False, default=float))
    return csv_path, meta_path


# --------------------------------------------------------------------------
# verification harnesses
# --------------------------------------------------------------------------

def passive_config(cfg=None, stretch=0.02, dt=1e-4, duration=1.0):
    """Thrusters, aerodynamics and band damping off; wings static; band stretched."""
    cfg = cfg or SimConfig.default()
    return cfg.with_overrides([
        ("sim.enable_thrusters", False), ("sim.enable_aero", False),
        ("sim.enable_bands", True), ("aerobat.band_damping", 0.0),
        ("gait.proximal_amplitude", 0.0), ("gait.distal_amplitude", 0.0),
        ("initial.aerobat_offset", [0.0, 0.0, -stretch]),
        ("initial.guard_euler", [0.0, 0.0, 0.0]),
        ("initial.guard_position", [0.0, 0.0, 0.0]),
        ("sim.dt_plant", dt), ("sim.control_rate", 1.0 / dt), ("sim.duration", duration),
    ])


def energy_trace(cfg):
    """Total energy and exchanged energy along a passive trajectory."""
    plant = CoupledPlant(cfg)
    dt = cfg.dt_plant
    n = int(round(float(cfg.sim["duration"]) / dt))
    x = plant.initial_state()
    zero = np.zeros(4)
    E = np.empty(n + 1)
    scale = np.empty(n + 1)
    for k in range(n + 1):
        ke, pe, vb = plant.energy(k * dt, x)
        E[k] = ke + pe
        scale[k] = ke + vb
        if k < n:
            x = plant.advance(k * dt, x, 1, zero)
    return E, scale


def passive_energy_audit(cfg=None, stretch=0.02, dt=1e-4, duration=1.0):
    """Maximum relative drift of the total energy on a passive release.

    Drift is ``max |E(t) - E(0)|`` divided by the largest exchanged energy
    (kinetic plus band potential) seen on the trajectory, which is independent
    of the gravitational datum.
    """
    E, scale = energy_trace(passive_config(cfg, stretch, dt, duration))
    denom = max(float(np.max(scale)), 1e-300)
    return float(np.max(np.abs(E - E[0])) / denom)
