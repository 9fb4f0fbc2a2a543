"""Rigid-body dynamics of the guard and of the suspended flapping vehicle.

Frames: world z is up, gravity is ``-g e3``.  Body x points forward, y left,
z up.  The guard carries six thrusters; f1..f4 are the roll/pitch pairs and
f5, f6 the yaw pair.  The vehicle (torso plus proximal/distal wing segments on
each side) hangs from the guard on four linear bands.

The vehicle is integrated as a floating base in world coordinates
(position, world velocity, rotation, body rate); wing joint angles are
prescribed by the gait.  Each wing segment is a uniform rod represented by two
point masses at ``L (1/2 +- 1/(2 sqrt 3))`` which reproduces the rod inertia.
"""

from dataclasses import dataclass, field

import numpy as np

from .geom import check_finite, cross, euler_rate_matrix, hat, rotation_to_euler

GRAVITY = 9.8
_ROD_POINTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


class DynamicsError(RuntimeError):
    pass


def _default_band_points():
    return np.array(
        [[0.03, 0.02, 0.0], [0.03, -0.02, 0.0], [-0.03, 0.02, 0.0], [-0.03, -0.02, 0.0]]
    )


@dataclass
class GuardParams:
    mass: float = 0.10
    inertia: np.ndarray = field(default_factory=lambda: np.diag([4.0e-4, 4.0e-4, 7.0e-4]))
    arm_x: float = 0.15
    arm_y: float = 0.15
    arm_z: float = 0.20
    f_max: float = 0.6
    f_min: float = 0.0
    yaw_thrusters_vertical: bool = True
    band_anchors: np.ndarray = field(default_factory=_default_band_points)

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        self.band_anchors = np.asarray(self.band_anchors, dtype=float)
        J = self.inertia
        if J.shape != (3, 3) or not np.allclose(J, J.T) or np.any(np.linalg.eigvalsh(J) <= 0):
            raise ValueError("guard inertia must be symmetric positive definite")
        if self.mass <= 0 or min(self.arm_x, self.arm_y, self.arm_z) <= 0:
            raise ValueError("guard mass and arms must be positive")
        if not 0.0 <= self.f_min < self.f_max:
            raise ValueError("thruster limits must satisfy 0 <= f_min < f_max")


@dataclass
class AerobatParams:
    torso_mass: float = 0.030
    torso_inertia: np.ndarray = field(default_factory=lambda: np.diag([6.3e-6, 1.8e-5, 2.0e-5]))
    proximal_mass: float = 0.003
    distal_mass: float = 0.002
    shoulder_offset: float = 0.02
    proximal_length: float = 0.07
    distal_length: float = 0.08
    band_stiffness: float = 8.0  # total K of the four bands, N/m
    band_damping: float = 0.05  # per band, N s/m
    band_rest_length: float = 0.0
    band_attach: np.ndarray = field(default_factory=_default_band_points)
    flap_limits: tuple = (-1.2, 1.2)
    fold_limits: tuple = (-0.2, 1.8)

    def __post_init__(self):
        self.torso_inertia = np.asarray(self.torso_inertia, dtype=float)
        self.band_attach = np.asarray(self.band_attach, dtype=float)
        J = self.torso_inertia
        if J.shape != (3, 3) or not np.allclose(J, J.T) or np.any(np.linalg.eigvalsh(J) <= 0):
            raise ValueError("torso inertia must be symmetric positive definite")
        if self.mass <= 0:
            raise ValueError("vehicle mass must be positive")
        if self.band_stiffness < 0 or self.band_damping < 0 or self.band_rest_length < 0:
            raise ValueError("band stiffness, damping and rest length must be non-negative")

    @property
    def mass(self):
        return self.torso_mass + 2.0 * (self.proximal_mass + self.distal_mass)

    @property
    def semi_span(self):
        return self.proximal_length + self.distal_length


@dataclass
class GuardState:
    p: np.ndarray
    R: np.ndarray
    v: np.ndarray
    omega: np.ndarray

    @property
    def euler(self):
        return rotation_to_euler(self.R)


@dataclass
class AerobatState:
    """World-frame floating-base state of the vehicle torso."""

    p: np.ndarray
    R: np.ndarray
    v: np.ndarray
    omega: np.ndarray


@dataclass
class AerobatRelState:
    """Vehicle pose relative to the guard plus the wing joint angles.

    ``p`` and ``v`` are expressed in the guard frame; ``euler`` is the
    relative attitude ``R_G^T R_A``; ``omega`` the relative body rate.
    """

    p: np.ndarray
    euler: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    q_w: np.ndarray
    q_w_dot: np.ndarray


def relative_state(guard, aerobat, q_w, q_w_dot):
    RG = guard.R
    dp = aerobat.p - guard.p
    p_rel = RG.T @ dp
    v_rel = RG.T @ (aerobat.v - guard.v) - cross(guard.omega, p_rel)
    R_rel = RG.T @ aerobat.R
    omega_rel = aerobat.omega - R_rel.T @ guard.omega
    return AerobatRelState(
        p=p_rel, euler=rotation_to_euler(R_rel), v=v_rel, omega=omega_rel,
        q_w=np.asarray(q_w, float), q_w_dot=np.asarray(q_w_dot, float),
    )


@dataclass
class BodyWrench:
    f: float
    m: np.ndarray

    def as_array(self):
        return np.concatenate([[self.f], self.m])


@dataclass
class ThrusterCommand:
    u: np.ndarray
    saturated: bool = False


# --------------------------------------------------------------------------
# guard
# --------------------------------------------------------------------------

def mixing_matrix(params):
    """``(f, m_x, m_y, m_z) = M @ u`` for the six thrust magnitudes."""
    Lx, Ly, Lz = params.arm_x, params.arm_y, params.arm_z
    vert = 1.0 if params.yaw_thrusters_vertical else 0.0
    return np.array(
        [
            [1.0, 1.0, 1.0, 1.0, vert, vert],
            [0.0, -Lx, 0.0, Lx, 0.0, 0.0],
            [-Ly, 0.0, Ly, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, -Lz, Lz],
        ]
    )


def saturate(u, params):
    u = np.asarray(u, float)
    clipped = np.clip(u, params.f_min, params.f_max)
    return ThrusterCommand(u=clipped, saturated=bool(np.any(np.abs(clipped - u) > 1e-12)))


def thruster_mixing(u, params, elastic=None):
    """Body wrench from thrusts plus the band contribution."""
    u = u.u if isinstance(u, ThrusterCommand) else np.asarray(u, float)
    w = mixing_matrix(params) @ u
    if elastic is not None:
        w = w + elastic.as_array()
    return BodyWrench(f=float(w[0]), m=w[1:].copy())


def inertial_force(R, f):
    return np.asarray(R, float)[:, 2] * f


def guard_derivatives(state, wrench, params, extra_force=None, gravity=GRAVITY):
    """``(p_dot, v_dot, R_dot, omega_dot)`` of the guard.

    ``extra_force`` is an additional world-frame force (the in-plane band
    components that the scalar body-z thrust cannot carry).
    """
    F = inertial_force(state.R, wrench.f)
    if extra_force is not None:
        F = F + extra_force
    v_dot = F / params.mass
    v_dot[2] -= gravity
    J = params.inertia
    w = state.omega
    omega_dot = np.linalg.solve(J, wrench.m - cross(w, J @ w))
    return state.v.copy(), v_dot, state.R @ hat(w), omega_dot


# --------------------------------------------------------------------------
# bands
# --------------------------------------------------------------------------

@dataclass
class ElasticWrench:
    """Band forces (world) and moments (own body frame) on both bodies."""

    force_guard: np.ndarray
    moment_guard: np.ndarray
    force_aerobat: np.ndarray
    moment_aerobat: np.ndarray
    energy: float

    def body_wrench_guard(self, R_G):
        """Elastic wrench on the guard as a body-z force and body moments."""
        return BodyWrench(f=float(R_G[:, 2] @ self.force_guard), m=self.moment_guard.copy())


def band_vectors(p_G, R_G, p_A, R_A, guard_params, aerobat_params):
    rG = guard_params.band_anchors @ R_G.T
    rA = aerobat_params.band_attach @ R_A.T
    return rG, rA, (p_A + rA) - (p_G + rG)


def elastic_wrench(p_G, R_G, p_A, R_A, guard_params, aerobat_params,
                   v_G=None, omega_G=None, v_A=None, omega_A=None):
    """Band forces from ``V = sum_k k_b (|l_k| - L0)^2 / 2`` plus optional damping.

    With zero rest length and coincident attachment geometry this is the
    quadratic ``K/2 |p_G - p_A|^2`` of the suspension.  Forces on the two bodies
    are equal and opposite band by band.
    """
    ap = aerobat_params
    kb = ap.band_stiffness / len(ap.band_attach)
    rG, rA, ell = band_vectors(p_G, R_G, p_A, R_A, guard_params, ap)
    L0 = ap.band_rest_length
    if L0 > 0.0:
        L = np.linalg.norm(ell, axis=1)
        safe = np.where(L > 1e-12, L, 1.0)
        f_on_A = -(kb * (L - L0) / safe)[:, None] * ell
        energy = 0.5 * kb * float(np.sum((L - L0) ** 2))
    else:
        f_on_A = -kb * ell
        energy = 0.5 * kb * float(np.sum(ell * ell))
    if ap.band_damping > 0.0 and v_G is not None:
        vG = v_G + cross(R_G @ omega_G, rG)
        vA = v_A + cross(R_A @ omega_A, rA)
        f_on_A = f_on_A - ap.band_damping * (vA - vG)
    F_A = f_on_A.sum(axis=0)
    tau_A = R_A.T @ np.sum(cross(rA, f_on_A), axis=0)
    tau_G = R_G.T @ np.sum(cross(rG, -f_on_A), axis=0)
    return ElasticWrench(force_guard=-F_A, moment_guard=tau_G, force_aerobat=F_A,
                         moment_aerobat=tau_A, energy=energy)


# --------------------------------------------------------------------------
# articulated vehicle
# --------------------------------------------------------------------------

@dataclass
class WingKinematics:
    """Body-frame kinematics of the wing point masses and strips.

    Arrays over points ``j``: position ``rho``, joint Jacobian ``Jq`` (j, 3, 2),
    velocity ``rho_dot = Jq q_dot`` and the joint-velocity product term
    ``rho_ddot_bias = q_dot^T H q_dot`` so that
    ``rho_ddot = Jq q_ddot + rho_ddot_bias``.
    """

    q_w: np.ndarray
    q_w_dot: np.ndarray
    q_w_ddot: np.ndarray
    mass: np.ndarray
    rho: np.ndarray
    Jq: np.ndarray
    rho_dot: np.ndarray
    rho_ddot_bias: np.ndarray
    strip_rho: np.ndarray
    strip_Jq: np.ndarray
    strip_rho_dot: np.ndarray
    strip_chord_dir: np.ndarray
    strip_span_dir: np.ndarray
    strip_normal: np.ndarray
    strip_side: np.ndarray

    @property
    def rho_ddot(self):
        return np.einsum("jkl,l->jk", self.Jq, self.q_w_ddot) + self.rho_ddot_bias


def _wing_points(alpha3, alpha4, side, segment, r, params):
    """Position, first and second partials of body points on one wing side.

    ``segment`` is 0 (proximal) or 1 (distal); ``r`` is the distance along it.
    Returns rho (k,3), d_rho (k,3,2), dd_rho (k,3,3) with second partials
    ordered (33, 34, 44).
    """
    sgn = float(side)
    ca, sa = np.cos(alpha3), np.sin(alpha3)
    cf, sf = np.cos(alpha4), np.sin(alpha4)
    x_hat = np.array([1.0, 0.0, 0.0])
    e_p = np.array([0.0, sgn * ca, sa])
    n_w = np.array([0.0, -sgn * sa, ca])
    e_d = cf * e_p - sf * x_hat
    s0 = np.array([0.0, sgn * params.shoulder_offset, 0.0])
    lp = params.proximal_length

    r = np.asarray(r, float)[:, None]
    dist = (np.asarray(segment) == 1)[:, None]
    r_prox = np.where(dist, lp, r)
    r_dist = np.where(dist, r, 0.0)

    rho = s0 + r_prox * e_p + r_dist * e_d
    d3 = r_prox * n_w + r_dist * (cf * n_w)
    d4 = r_dist * (-sf * e_p - cf * x_hat)
    d33 = -r_prox * e_p + r_dist * (-cf * e_p)
    d34 = r_dist * (-sf * n_w)
    d44 = r_dist * (-e_d)
    chord_dir = np.where(dist, cf * x_hat + sf * e_p, x_hat)
    span_dir = np.where(dist, e_d, e_p)
    normal = np.broadcast_to(n_w, rho.shape)
    return (rho, np.stack([d3, d4], axis=2), np.stack([d33, d34, d44], axis=2),
            chord_dir, span_dir, normal)


class WingModel:
    """Precomputed point-mass and strip layout of both wings."""

    def __init__(self, params, strip_s):
        self.params = params
        lp, ld = params.proximal_length, params.distal_length
        seg, r, m, side = [], [], [], []
        for sd in (1, -1):
            for segment, length, mass in ((0, lp, params.proximal_mass), (1, ld, params.distal_mass)):
                for frac in _ROD_POINTS:
                    seg.append(segment)
                    r.append(frac * length)
                    m.append(0.5 * mass)
                    side.append(sd)
        self.mass_segment = np.array(seg)
        self.mass_r = np.array(r)
        self.mass_side = np.array(side)
        self.mass = np.array(m)
        strip_s = np.asarray(strip_s, float)
        self.n_strips_per_wing = strip_s.shape[0]
        self.strip_segment = np.concatenate([(strip_s > lp).astype(int)] * 2)
        self.strip_r = np.concatenate([np.where(strip_s > lp, strip_s - lp, strip_s)] * 2)
        self.strip_side = np.repeat([1, -1], strip_s.shape[0])

    def _evaluate(self, sides, segs, rs, q, qd):
        out = [np.empty((len(rs), 3)), np.empty((len(rs), 3, 2)), np.empty((len(rs), 3, 3)),
               np.empty((len(rs), 3)), np.empty((len(rs), 3)), np.empty((len(rs), 3))]
        for sd in (1, -1):
            idx = sides == sd
            res = _wing_points(q[0], q[1], sd, segs[idx], rs[idx], self.params)
            for o, v in zip(out, res):
                o[idx] = v
        return out

    def kinematics(self, q_w, q_w_dot, q_w_ddot):
        q = np.asarray(q_w, float)
        qd = np.asarray(q_w_dot, float)
        rho, J, H, *_ = self._evaluate(self.mass_side, self.mass_segment, self.mass_r, q, qd)
        quad = np.array([qd[0] ** 2, 2.0 * qd[0] * qd[1], qd[1] ** 2])
        srho, sJ, _, cdir, sdir, nrm = self._evaluate(
            self.strip_side, self.strip_segment, self.strip_r, q, qd)
        return WingKinematics(
            q_w=q, q_w_dot=qd, q_w_ddot=np.asarray(q_w_ddot, float), mass=self.mass,
            rho=rho, Jq=J, rho_dot=J @ qd, rho_ddot_bias=H @ quad,
            strip_rho=srho, strip_Jq=sJ, strip_rho_dot=sJ @ qd,
            strip_chord_dir=cdir, strip_span_dir=sdir, strip_normal=nrm,
            strip_side=self.strip_side,
        )


def mass_matrix(wk, params):
    """Locked 6x6 inertia ``D_u`` on ``(R^T v_dot, omega_dot)``."""
    M = params.torso_mass + wk.mass.sum()
    c = wk.mass @ wk.rho
    rr = np.einsum("j,jk,jl->kl", wk.mass, wk.rho, wk.rho)
    J_lock = params.torso_inertia + np.trace(rr) * np.eye(3) - rr
    C = hat(c)
    return np.block([[M * np.eye(3), -C], [C, J_lock]])


def coupling_matrix(wk):
    """``D_ua``: generalized inertial force per unit joint acceleration (6x2)."""
    top = np.einsum("j,jkl->kl", wk.mass, wk.Jq)
    bottom = np.einsum("j,jkl->kl", wk.mass, np.cross(wk.rho[:, :, None], wk.Jq, axis=1))
    return np.vstack([top, bottom])


def bias_forces(state, wk, params, gravity=GRAVITY):
    """``H_u``: velocity-product terms plus gravity, in the same coordinates."""
    w = state.omega
    g_b = state.R.T @ np.array([0.0, 0.0, -gravity])
    M = params.torso_mass + wk.mass.sum()
    c = wk.mass @ wk.rho
    wxr = cross(w, wk.rho)
    kappa = cross(w, wxr) + 2.0 * cross(w, wk.rho_dot) + wk.rho_ddot_bias
    mk = wk.mass[:, None] * kappa
    lin = mk.sum(axis=0) - M * g_b
    J = params.torso_inertia
    ang = cross(w, J @ w) + cross(wk.rho, mk).sum(axis=0) - cross(c, g_b)
    return np.concatenate([lin, ang])


@dataclass
class BiasCoefficients:
    """Configuration-only factors of ``H_u`` so it is cheap to evaluate per rate.

    ``H_u`` is quadratic in the body rate ``w``; with the point sums
    ``c = sum m rho``, ``c_dot = sum m rho_dot`` and the locked inertia it reads
    ``lin = w x (w x c) + 2 w x c_dot + s_b - M g_b`` and
    ``ang = w x (J w) + 2 K w + a_b - c x g_b``.
    """

    M: float
    c: np.ndarray
    c_dot: np.ndarray
    s_b: np.ndarray
    a_b: np.ndarray
    J: np.ndarray
    K: np.ndarray

    @classmethod
    def from_kinematics(cls, wk, params):
        m = wk.mass
        rr = np.einsum("j,jk,jl->kl", m, wk.rho, wk.rho)
        J = params.torso_inertia + np.trace(rr) * np.eye(3) - rr
        rd = np.einsum("j,jk,jl->kl", m, wk.rho_dot, wk.rho)
        mb = m[:, None] * wk.rho_ddot_bias
        return cls(
            M=params.torso_mass + m.sum(), c=m @ wk.rho, c_dot=m @ wk.rho_dot,
            s_b=mb.sum(axis=0), a_b=cross(wk.rho, mb).sum(axis=0),
            J=J, K=np.trace(rd) * np.eye(3) - rd,
        )

    def evaluate(self, R, w, gravity=GRAVITY):
        g_b = -gravity * R[2]
        wc = _cross3(w, self.c)
        lin = _cross3(w, wc) + 2.0 * _cross3(w, self.c_dot) + self.s_b - self.M * g_b
        ang = _cross3(w, self.J @ w) + 2.0 * (self.K @ w) + self.a_b - _cross3(self.c, g_b)
        return np.concatenate([lin, ang])


def _cross3(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def strip_jacobians(R_A, wk):
    """Strip velocity Jacobians.

    Returns ``J`` (k, 3, 6) mapping ``(R^T v, omega)`` to world strip velocity
    and ``Ja`` (k, 3, 2) mapping joint rates to world strip velocity.
    """
    k = wk.strip_rho.shape[0]
    J = np.empty((k, 3, 6))
    J[:, :, :3] = R_A
    J[:, :, 3:] = -np.einsum("ab,kbc->kac", R_A, np.array([hat(r) for r in wk.strip_rho]))
    Ja = np.einsum("ab,kbc->kac", R_A, wk.strip_Jq)
    return J, Ja


def strip_velocities(state, wk):
    """World velocity of each strip (rigid motion plus joint motion)."""
    local = cross(state.omega, wk.strip_rho) + wk.strip_rho_dot
    return state.v + local @ state.R.T


def generalized_strip_force(R_A, wk, forces_world):
    fb = forces_world @ R_A
    return np.concatenate([fb.sum(axis=0), cross(wk.strip_rho, fb).sum(axis=0)])


def aerobat_derivatives(state, wk, params, band_force=None, band_moment=None,
                        strip_forces_world=None, gravity=GRAVITY, D_u=None):
    """Floating-base accelerations ``(v_dot world, omega_dot body)``.

    Solves ``D_u nu_dot = -D_ua q_w_ddot - H_u + Q`` where ``Q`` collects the
    band wrench and the strip forces mapped through the strip Jacobians.
    """
    if D_u is None:
        D_u = mass_matrix(wk, params)
    rhs = -coupling_matrix(wk) @ wk.q_w_ddot - bias_forces(state, wk, params, gravity)
    if band_force is not None:
        rhs[:3] += state.R.T @ band_force
        rhs[3:] += band_moment
    if strip_forces_world is not None:
        rhs += generalized_strip_force(state.R, wk, strip_forces_world)
    try:
        nu_dot = np.linalg.solve(D_u, rhs)
    except np.linalg.LinAlgError as exc:
        raise DynamicsError("singular vehicle mass matrix") from exc
    return state.R @ nu_dot[:3], nu_dot[3:]


def aerobat_kinetic_energy(state, wk, params):
    v_pts = state.v + (cross(state.omega, wk.rho) + wk.rho_dot) @ state.R.T
    w = state.omega
    return (0.5 * params.torso_mass * state.v @ state.v + 0.5 * w @ params.torso_inertia @ w
            + 0.5 * float(wk.mass @ np.sum(v_pts * v_pts, axis=1)))


def aerobat_potential_energy(state, wk, params, gravity=GRAVITY):
    z_pts = state.p[2] + wk.rho @ state.R[2]
    return gravity * (params.torso_mass * state.p[2] + float(wk.mass @ z_pts))


def guard_kinetic_energy(state, params):
    w = state.omega
    return 0.5 * params.mass * state.v @ state.v + 0.5 * w @ params.inertia @ w


def total_momentum(guard, aerobat, wk, gp, ap):
    v_pts = aerobat.v + (cross(aerobat.omega, wk.rho) + wk.rho_dot) @ aerobat.R.T
    return gp.mass * guard.v + ap.torso_mass * aerobat.v + wk.mass @ v_pts


def euler_rates(R, omega):
    return euler_rate_matrix(rotation_to_euler(R)) @ check_finite(omega, "omega")
