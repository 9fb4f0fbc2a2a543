"""Extended-state observer and feedback-linearizing hover control.

The guard is abstracted as

    x1_dot = x2
    x2_dot = g1 + g2 u + g3 x3
    x3_dot = G(t)

with ``x1 = [p, euler]``, ``u`` the generalized wrench
``[world force (N), body moment (N m)]`` and ``x3`` the unmeasured band
wrench transmitted by the vehicle.  ``g2 = g3 = blockdiag(I / m, W J^-1)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .geom import (
    euler_rate_matrix,
    euler_rate_matrix_dot,
    rotation_to_euler,
    wrap_angle,
)
from .integrate import rk4_step
from .vehicle import GRAVITY, mixing_matrix, saturate


class ObserverDivergenceError(RuntimeError):
    pass


class TuningError(ValueError):
    pass


@dataclass
class PlantTerms:
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray


def plant_terms(x1, x2, guard_params, gravity=GRAVITY):
    """Drift, control effectiveness and disturbance map at ``(x1, x2)``."""
    q = x1[3:]
    qd = x2[3:]
    W = euler_rate_matrix(q)
    omega = np.linalg.solve(W, qd)
    J = guard_params.inertia
    Jinv = np.linalg.inv(J)
    g1 = np.zeros(6)
    g1[2] = -gravity
    g1[3:] = euler_rate_matrix_dot(q, qd) @ omega - W @ Jinv @ np.cross(omega, J @ omega)
    g2 = np.zeros((6, 6))
    g2[:3, :3] = np.eye(3) / guard_params.mass
    g2[3:, 3:] = W @ Jinv
    return PlantTerms(g1=g1, g2=g2, g3=g2.copy())


@dataclass
class ObserverState:
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray

    @classmethod
    def zeros(cls, dim=6):
        return cls(np.zeros(dim), np.zeros(dim), np.zeros(dim))

    def as_array(self):
        return np.concatenate([self.x1, self.x2, self.x3])


@dataclass
class ObserverGains:
    beta1: np.ndarray
    beta2: np.ndarray
    beta3: np.ndarray

    @property
    def dim(self):
        return self.beta1.shape[0]


def error_dynamics_matrix(gains, g3):
    """Block matrix ``[[-b1, I, 0], [-b2, 0, g3], [-b3, 0, 0]]`` of the estimate error."""
    n = gains.dim
    I, Z = np.eye(n), np.zeros((n, n))
    g3 = np.atleast_2d(np.asarray(g3, float))
    return np.block(
        [[-gains.beta1, I, Z], [-gains.beta2, Z, g3], [-gains.beta3, Z, Z]]
    )


def is_hurwitz(A):
    return bool(np.max(np.linalg.eigvals(A).real) < 0.0)


def tune_observer(omega0, g3):
    """Place every error pole at ``-omega0`` (per axis ``(s + omega0)^3``)."""
    if not omega0 > 0.0:
        raise TuningError("observer bandwidth must be positive")
    g3 = np.atleast_2d(np.asarray(g3, float))
    n = g3.shape[0]
    try:
        g3_inv = np.linalg.inv(g3)
    except np.linalg.LinAlgError as exc:
        raise TuningError("disturbance map g3 is singular") from exc
    if np.linalg.cond(g3) > 1e12:
        raise TuningError("disturbance map g3 is ill conditioned")
    gains = ObserverGains(
        beta1=3.0 * omega0 * np.eye(n),
        beta2=3.0 * omega0**2 * np.eye(n),
        beta3=omega0**3 * g3_inv,
    )
    if not is_hurwitz(error_dynamics_matrix(gains, g3)):
        raise TuningError("tuned observer error dynamics are not Hurwitz")
    return gains


def observer_derivative(xhat, z, u, terms, gains):
    n = gains.dim
    x1, x2, x3 = xhat[:n], xhat[n : 2 * n], xhat[2 * n :]
    e1 = x1 - z
    if n == 6:
        e1 = e1.copy()
        e1[3:] = wrap_angle(e1[3:])
    return np.concatenate(
        [
            x2 - gains.beta1 @ e1,
            terms.g1 + terms.g2 @ u + terms.g3 @ x3 - gains.beta2 @ e1,
            -gains.beta3 @ e1,
        ]
    )


def observer_step(obs, z, u, terms, gains, dt, ceiling=np.inf):
    """Advance the estimates one RK4 step with ``z`` and ``u`` held.

    Raises
    ------
    ObserverDivergenceError
        If the output error exceeds ``ceiling`` after the step.
    """
    z = np.asarray(z, float)
    u = np.asarray(u, float)
    x = rk4_step(lambda t, xh: observer_derivative(xh, z, u, terms, gains), 0.0,
                 obs.as_array(), dt)
    n = gains.dim
    new = ObserverState(x[:n], x[n : 2 * n], x[2 * n :])
    err = new.x1 - z
    if n == 6:
        err[3:] = wrap_angle(err[3:])
    if not np.all(np.isfinite(x)) or np.linalg.norm(err) > ceiling:
        raise ObserverDivergenceError(
            f"observer output error {np.linalg.norm(err):.3g} exceeds ceiling {ceiling:.3g}")
    return new


@dataclass
class ControllerConfig:
    """Outer-loop gains and the hover setpoint.

    Position loop poles are set by ``kp_pos``/``kd_pos`` and attitude loop
    poles by ``kp_att``/``kd_att``; ``kp = 0`` reduces to pure rate feedback.
    """

    kp_pos: float = 4.0
    kd_pos: float = 4.0
    kp_att: float = 100.0
    kd_att: float = 20.0
    setpoint: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw_setpoint: float = 0.0
    max_tilt: float = 0.35
    g2_cond_max: float = 1e8

    @property
    def K(self):
        return np.diag([self.kd_pos] * 3 + [self.kd_att] * 3)

    def __post_init__(self):
        self.setpoint = np.asarray(self.setpoint, float)
        for k in (self.kp_pos, self.kd_pos, self.kp_att, self.kd_att):
            if k < 0:
                raise ValueError("controller gains must be non-negative")
        if self.kd_pos <= 0 or self.kd_att <= 0:
            raise ValueError("damping gains must be positive for a Hurwitz outer loop")


def hover_setpoint_error(x1, cfg):
    """``setpoint - x1`` for position and yaw; roll/pitch referenced to level."""
    x1 = np.asarray(x1, float)
    err = np.empty(6)
    err[:3] = cfg.setpoint - x1[:3]
    err[3] = wrap_angle(0.0 - x1[3])
    err[4] = wrap_angle(0.0 - x1[4])
    err[5] = wrap_angle(cfg.yaw_setpoint - x1[5])
    return err


def tilt_from_force(F, yaw, max_tilt=np.inf):
    """Roll and pitch that align body z with ``F`` at the given yaw."""
    c, s = np.cos(yaw), np.sin(yaw)
    b = np.array([c * F[0] + s * F[1], -s * F[0] + c * F[1], F[2]])
    nb = np.linalg.norm(b)
    if nb < 1e-12:
        return 0.0, 0.0
    b = b / nb
    roll = np.arcsin(np.clip(-b[1], -1.0, 1.0))
    pitch = np.arctan2(b[0], b[2])
    return float(np.clip(roll, -max_tilt, max_tilt)), float(np.clip(pitch, -max_tilt, max_tilt))


def outer_loop(x1, x2, cfg, tilt=(0.0, 0.0)):
    """Desired generalized acceleration ``u0`` (PD about the setpoint)."""
    err = hover_setpoint_error(x1, cfg)
    err[3] = wrap_angle(tilt[0] - x1[3])
    err[4] = wrap_angle(tilt[1] - x1[4])
    kp = np.array([cfg.kp_pos] * 3 + [cfg.kp_att] * 3)
    return kp * err - cfg.K @ np.asarray(x2, float)


@dataclass
class ControlOutput:
    wrench: np.ndarray  # desired generalized wrench [F_world, m_body]
    u0: np.ndarray
    inertial: np.ndarray  # g2^-1 g1
    aerodynamic: np.ndarray  # g2^-1 g3 x3_hat
    tilt: tuple
    ok: bool = True


def cancellation_law(u0, terms, x3_hat):
    """``u = g2^-1 (u0 - g1 - g3 x3_hat)`` with its two cancellation parts."""
    inertial = np.linalg.solve(terms.g2, terms.g1)
    aero = np.linalg.solve(terms.g2, terms.g3 @ x3_hat)
    u = np.linalg.solve(terms.g2, u0) - inertial - aero
    return u, inertial, aero


def control_law(obs, x1, x2, terms, cfg, last=None):
    """Feedback-linearizing hover law.

    The translational block is evaluated first; its force direction fixes the
    roll/pitch reference of the attitude block.  Falls back to ``last`` (with
    ``ok=False``) when ``g2`` is ill conditioned.
    """
    x3_hat = obs.x3
    if np.linalg.cond(terms.g2) > cfg.g2_cond_max:
        if last is None:
            raise ValueError("control effectiveness ill conditioned and no previous command")
        return ControlOutput(last.wrench, last.u0, last.inertial, last.aerodynamic, last.tilt, ok=False)
    u0 = outer_loop(x1, x2, cfg)
    u, _, _ = cancellation_law(u0, terms, x3_hat)
    tilt = tilt_from_force(u[:3], x1[5], cfg.max_tilt)
    u0 = outer_loop(x1, x2, cfg, tilt)
    u, inertial, aero = cancellation_law(u0, terms, x3_hat)
    return ControlOutput(wrench=u, u0=u0, inertial=inertial, aerodynamic=aero, tilt=tilt)


@dataclass
class Allocation:
    command: np.ndarray
    requested: np.ndarray  # (f, m_x, m_y, m_z)
    achieved: np.ndarray
    saturated: bool
    achievable: bool


def allocate(wrench, guard_params, tol=1e-9):
    """Minimum-norm thrusts for ``(f, m_x, m_y, m_z)`` followed by clamping."""
    w = np.asarray(wrench, float)
    M = mixing_matrix(guard_params)
    u = np.linalg.pinv(M) @ w
    cmd = saturate(u, guard_params)
    achieved = M @ cmd.u
    return Allocation(command=cmd.u, requested=w, achieved=achieved, saturated=cmd.saturated,
                      achievable=bool(np.max(np.abs(achieved - w)) <= tol))


def body_wrench_request(wrench6, R):
    """Project the generalized wrench onto what the thrusters can produce."""
    f = float(R[:, 2] @ wrench6[:3])
    return np.concatenate([[f], wrench6[3:]])


def applied_generalized_wrench(achieved, R):
    """Generalized wrench actually delivered by thrust ``achieved = (f, m)``."""
    return np.concatenate([R[:, 2] * achieved[0], achieved[1:]])


def measurement_from_state(p, R, v, omega):
    q = rotation_to_euler(R)
    return np.concatenate([p, q]), np.concatenate([v, euler_rate_matrix(q) @ omega])


def level_g3(guard_params):
    return plant_terms(np.zeros(6), np.zeros(6), guard_params).g3

