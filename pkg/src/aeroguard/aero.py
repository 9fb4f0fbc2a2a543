"""Unsteady lifting-line strip aerodynamics.

Spanwise circulation is a truncated sine series in the transformed coordinate
``theta = arccos(s / l)``.  Each strip responds to its normal-flow input through
a two-exponential Wagner kernel, realized as two lag states per strip, so the
whole wing is a linear state-space system with state ``xi = [a, Z]``.

Time enters the Wagner kernel as the scaled time ``tau = time_scale * t``.
"""

from dataclasses import dataclass, field

import numpy as np

E_VARIANTS = ("autonomous", "time-varying")
WAGNER_FORMS = ("jones", "decaying")


class AeroConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class WagnerCoefficients:
    """Two-term exponential approximation of the Wagner function.

    ``form="jones"`` is the rising indicial response
    ``1 - psi1 exp(-eps1 tau / c) - psi2 exp(-eps2 tau / c)``;
    ``form="decaying"`` is the bare decaying sum
    ``psi1 exp(-eps1 tau / c) + psi2 exp(-eps2 tau / c)``.
    """

    psi1: float = 0.165
    psi2: float = 0.335
    eps1: float = 0.0455
    eps2: float = 0.3
    form: str = "jones"
    time_scale: float = 2.0

    def __post_init__(self):
        if self.eps1 <= 0.0 or self.eps2 <= 0.0:
            raise AeroConfigurationError("Wagner exponents must be positive")
        if self.form not in WAGNER_FORMS:
            raise AeroConfigurationError(f"unknown Wagner form {self.form!r}; use one of {WAGNER_FORMS}")
        if self.time_scale <= 0.0:
            raise AeroConfigurationError("time_scale must be positive")

    @property
    def psi(self):
        return np.array([self.psi1, self.psi2])

    @property
    def eps(self):
        return np.array([self.eps1, self.eps2])

    @property
    def phi0(self):
        return float(wagner_phi(0.0, 1.0, self))


def wagner_phi(tau, c, w):
    """Wagner function at scaled time ``tau`` for a strip of chord ``c``."""
    tau = np.asarray(tau, dtype=float)
    decay = w.psi1 * np.exp(-w.eps1 * tau / c) + w.psi2 * np.exp(-w.eps2 * tau / c)
    if w.form == "jones":
        return 1.0 - decay
    return decay


def wagner_phi_rate(tau, c, w):
    """d(Phi)/d(tau)."""
    tau = np.asarray(tau, dtype=float)
    rate = (w.psi1 * w.eps1 / c) * np.exp(-w.eps1 * tau / c) + (
        w.psi2 * w.eps2 / c
    ) * np.exp(-w.eps2 * tau / c)
    return rate if w.form == "jones" else -rate


@dataclass(frozen=True)
class StripGeometry:
    """Spanwise strips of one wing; ``s`` runs from root (0) to tip (l)."""

    m: int
    l: float
    s: np.ndarray
    theta: np.ndarray
    chord: np.ndarray
    width: np.ndarray


def _chord_function(chord_profile, l):
    if callable(chord_profile):
        return chord_profile
    arr = np.asarray(chord_profile, dtype=float)
    if arr.ndim == 0:
        return lambda s: np.full_like(np.asarray(s, float), float(arr))
    if arr.ndim == 2 and arr.shape[1] == 2:
        return lambda s: np.interp(s, arr[:, 0], arr[:, 1])
    raise AeroConfigurationError("chord_profile must be a callable, a scalar or an (k, 2) table")


def elliptic_chord(root_chord, l):
    return lambda s: root_chord * np.sqrt(np.clip(1.0 - (np.asarray(s) / l) ** 2, 0.0, None))


def strips_from_stations(s, l, chord_profile, width=None):
    """Strip geometry for explicit spanwise stations ``0 < s_i < l``."""
    if not l > 0.0:
        raise AeroConfigurationError("semi-span must be positive")
    s = np.sort(np.asarray(s, dtype=float).ravel())
    if s.size < 1:
        raise AeroConfigurationError("strip count must be a positive integer")
    if np.any(s <= 0.0) or np.any(s >= l):
        raise AeroConfigurationError("strip stations must lie strictly inside (0, l)")
    if np.any(np.diff(s) <= 0.0):
        raise AeroConfigurationError("strip stations must be distinct")
    theta = np.arccos(s / l)
    if width is None:
        mids = 0.5 * (s[1:] + s[:-1])
        width = np.diff(np.concatenate([[0.0], mids, [l]]))
    chord = np.asarray(_chord_function(chord_profile, l)(s), dtype=float)
    if chord.shape != s.shape or np.any(~np.isfinite(chord)) or np.any(chord <= 0.0):
        raise AeroConfigurationError("chord must be positive at every strip")
    return StripGeometry(m=s.size, l=float(l), s=s, theta=theta, chord=chord,
                         width=np.asarray(width, float))


def build_strips(m, l, chord_profile):
    """Cosine-spaced strips: ``theta_i = (2i - 1) pi / (4m)`` for i = 1..m.

    Strip boundaries sit at ``theta = j pi / (2m)`` so widths tile ``[0, l]``.
    """
    if int(m) != m or m < 1:
        raise AeroConfigurationError("strip count must be a positive integer")
    if not l > 0.0:
        raise AeroConfigurationError("semi-span must be positive")
    m = int(m)
    theta_mid = (2.0 * np.arange(1, m + 1) - 1.0) * np.pi / (4.0 * m)
    bounds = l * np.cos(np.arange(m, -1, -1) * np.pi / (2.0 * m))
    bounds[0] = 0.0
    return strips_from_stations(l * np.cos(theta_mid), l, chord_profile, width=np.diff(bounds))


def fourier_basis(theta, n):
    """Rows ``[sin(theta_i), sin(2 theta_i), ..., sin(n theta_i)]``."""
    k = np.arange(1, n + 1)
    return np.sin(np.outer(np.asarray(theta, float), k))


def induced_matrix(theta, n):
    """Matrix with entries ``sin(k theta_i) / sin(theta_i)``; first column is ones."""
    theta = np.asarray(theta, float)
    S = fourier_basis(theta, n) / np.sin(theta)[:, None]
    S[:, 0] = 1.0
    return S


def _coefficients(a, n=None):
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or (n is not None and a.shape[0] != n):
        raise ValueError(f"expected {n} Fourier coefficients, got shape {a.shape}")
    return a


def circulation(a, geom):
    """Strip circulations ``Gamma_i = sum_k a_k sin(k theta_i)``."""
    a = _coefficients(a)
    return fourier_basis(geom.theta, a.shape[0]) @ a


def induced_kinematics(a, geom):
    a = _coefficients(a)
    return induced_matrix(geom.theta, a.shape[0]) @ a


@dataclass(frozen=True)
class AeroSystemMatrices:
    """Per-strip blocks and the assembled wing realization.

    State ordering is ``xi = [a_1..a_n, z_{1,1}, z_{2,1}, ..., z_{1,m}, z_{2,m}]``.
    With normal-flow input ``y1`` (the induced part is folded in):

        xi_dot = Pi1 @ xi + Pi2 @ y1
        beta   = Pi3 @ xi + Pi4 @ y1
    """

    geom: StripGeometry
    wagner: WagnerCoefficients
    n: int
    e_variant: str
    A: np.ndarray  # (m, n)
    A_pinv: np.ndarray  # (n, m)
    B: np.ndarray  # (m, n)
    C: np.ndarray  # (m, 2)
    D: np.ndarray  # (m, 2) diagonal entries of D_i
    E: np.ndarray  # (m, 2) autonomous input gains
    S: np.ndarray  # (m, n) induced-kinematics matrix
    phi0: float
    Pi1: np.ndarray
    Pi2: np.ndarray
    Pi3: np.ndarray
    Pi4: np.ndarray
    cond_A: float = field(default=np.nan)

    @property
    def m(self):
        return self.geom.m

    @property
    def n_states(self):
        return self.n + 2 * self.geom.m

    def zero_state(self):
        return np.zeros(self.n_states)

    def split(self, xi):
        return xi[: self.n], xi[self.n :].reshape(self.m, 2)

    def E_at(self, t):
        """Input gains of the lag states at time ``t``."""
        if self.e_variant == "autonomous":
            return self.E
        c = self.geom.chord[:, None]
        return 2.0 - np.exp(self.wagner.eps[None, :] * t / c)


def assemble_system(geom, w, n=None, e_variant="autonomous", check_stability=True):
    """Build the strip matrices and the assembled wing system.

    ``A_i`` is the Fourier row of strip i, ``B_i = A_i / c_i``,
    ``C_i = [psi1 eps1 / c_i, psi2 eps2 / c_i]`` and
    ``D_i = diag(-sigma eps1 / c_i, -sigma eps2 / c_i)`` with ``sigma`` the
    Wagner time scale.  The autonomous input gain is ``E_i = [sigma, sigma]``.

    Raises
    ------
    AeroConfigurationError
        If the stacked Fourier rows are rank deficient, or (autonomous variant)
        the assembled system has an eigenvalue with non-negative real part.
    """
    if e_variant not in E_VARIANTS:
        raise AeroConfigurationError(f"unknown E variant {e_variant!r}; use one of {E_VARIANTS}")
    m = geom.m
    n = m if n is None else int(n)
    if n < 1:
        raise AeroConfigurationError("Fourier order must be >= 1")
    c = geom.chord
    A = fourier_basis(geom.theta, n)
    if np.linalg.matrix_rank(A) < min(m, n):
        raise AeroConfigurationError("stacked Fourier rows are singular (collinear strip stations)")
    A_pinv = np.linalg.inv(A) if m == n else np.linalg.pinv(A)
    B = A / c[:, None]
    sigma = w.time_scale
    C = w.psi[None, :] * w.eps[None, :] / c[:, None]
    D = -sigma * w.eps[None, :] / c[:, None]
    E = np.full((m, 2), sigma)
    S = induced_matrix(geom.theta, n)
    phi0 = w.phi0

    # block-diagonal placement of the per-strip lag blocks
    Cblk = np.zeros((m, 2 * m))
    Dblk = np.zeros((2 * m, 2 * m))
    Eblk = np.zeros((2 * m, m))
    for i in range(m):
        Cblk[i, 2 * i : 2 * i + 2] = C[i]
        Dblk[2 * i, 2 * i] = D[i, 0]
        Dblk[2 * i + 1, 2 * i + 1] = D[i, 1]
        Eblk[2 * i : 2 * i + 2, i] = E[i]

    Pi1 = np.block(
        [
            [A_pinv @ (-B + phi0 * S), A_pinv @ Cblk],
            [Eblk @ S, Dblk],
        ]
    )
    Pi2 = np.vstack([phi0 * A_pinv, Eblk])
    Pi3 = np.hstack([phi0 * S, Cblk])
    Pi4 = phi0 * np.eye(m)

    sys = AeroSystemMatrices(
        geom=geom, wagner=w, n=n, e_variant=e_variant, A=A, A_pinv=A_pinv, B=B,
        C=C, D=D, E=E, S=S, phi0=phi0, Pi1=Pi1, Pi2=Pi2, Pi3=Pi3, Pi4=Pi4,
        cond_A=float(np.linalg.cond(A)),
    )
    if check_stability and e_variant == "autonomous":
        eig = np.linalg.eigvals(Pi1)
        if np.max(eig.real) >= 0.0:
            raise AeroConfigurationError(
                f"aerodynamic system not asymptotically stable (max Re = {np.max(eig.real):.3g}); "
                "reduce chord relative to sin(theta) at the tip"
            )
    return sys


def aero_derivative(xi, y1, sys, t=0.0):
    """Time derivative of the wing state for normal-flow input ``y1``."""
    if sys.e_variant == "autonomous":
        return sys.Pi1 @ xi + sys.Pi2 @ y1
    a, Z = sys.split(xi)
    y_eff = y1 + sys.S @ a
    rhs = -sys.B @ a + np.sum(sys.C * Z, axis=1) + sys.phi0 * y_eff
    a_dot = sys.A_pinv @ rhs
    Z_dot = sys.D * Z + sys.E_at(t) * y_eff[:, None]
    return np.concatenate([a_dot, Z_dot.ravel()])


@dataclass(frozen=True)
class StripKinematics:
    """Normal-flow input, induced component and their sum, per strip."""

    y1: np.ndarray
    y_gamma: np.ndarray
    y_eff: np.ndarray

    @classmethod
    def from_state(cls, xi, y1, sys):
        a, _ = sys.split(xi)
        y1 = np.asarray(y1, float)
        yg = sys.S @ a
        return cls(y1=y1, y_gamma=yg, y_eff=y1 + yg)


def aero_step(xi, kin, sys, dt, t=0.0):
    """Advance the wing state one RK4 step with the normal-flow input held.

    ``kin`` may be a :class:`StripKinematics` or a bare array of ``y1``.
    """
    from .integrate import IntegrationError, rk4_step

    y1 = kin.y1 if isinstance(kin, StripKinematics) else np.asarray(kin, float)
    if not np.all(np.isfinite(y1)):
        raise IntegrationError("non-finite strip input", t)
    return rk4_step(lambda tt, x: aero_derivative(x, y1, sys, tt), t, np.asarray(xi, float), dt)


def strip_beta(xi, y1, sys):
    """Force-coefficient response ``beta_i = Phi0 y'_i + C_i Z_i``."""
    a, Z = sys.split(xi)
    y_eff = np.asarray(y1, float) + sys.S @ a
    return sys.phi0 * y_eff + np.sum(sys.C * Z, axis=1)


def coefficient_rate(xi, y1, sys):
    """``a_dot`` from the collocation equations, solved rather than via ``A^+``.

    The stacked Fourier rows are poorly conditioned, so a backward-stable solve
    keeps ``A a_dot`` accurate even where ``a_dot`` itself is not.
    """
    a, Z = sys.split(xi)
    y_eff = np.asarray(y1, float) + sys.S @ a
    rhs = -sys.B @ a + np.sum(sys.C * Z, axis=1) + sys.phi0 * y_eff
    if sys.A.shape[0] == sys.A.shape[1]:
        return np.linalg.solve(sys.A, rhs)
    return np.linalg.lstsq(sys.A, rhs, rcond=None)[0]


def kutta_joukowski_residual(xi, y1, sys, t=0.0):
    """``beta_i - (Gamma_i / c_i + dGamma_i/dt)`` evaluated on the state-space."""
    a, _ = sys.split(xi)
    gamma = sys.A @ a
    gamma_dot = sys.A @ coefficient_rate(xi, y1, sys)
    return strip_beta(xi, y1, sys) - (gamma / sys.geom.chord + gamma_dot)


def duhamel_response(y_hist, t_grid, c, w):
    """Reference Duhamel quadrature of the strip response (test oracle).

    Evaluates ``beta(t_j) = Phi0 y(t_j) + int_0^{t_j} K(t_j - s) y(s) ds`` by the
    trapezoidal rule on ``t_grid``, where ``K`` is the Wagner kernel rate
    expressed in physical time.  The printed decaying form differentiated on
    the integration variable and the rising form differentiated on elapsed
    time give the same kernel.
    """
    y_hist = np.asarray(y_hist, float)
    t_grid = np.asarray(t_grid, float)
    sigma = w.time_scale
    sign = -1.0 if w.form == "decaying" else 1.0
    phi0 = w.phi0
    n = t_grid.size
    h = (t_grid[-1] - t_grid[0]) / (n - 1) if n > 1 else 0.0
    if h > 0 and np.max(np.abs(t_grid - t_grid[0] - h * np.arange(n))) <= 1e-9 * h:
        # uniform grid: the trapezoid sums are one discrete convolution
        kern = sign * sigma * wagner_phi_rate(sigma * (t_grid - t_grid[0]), c, w)
        full = np.convolve(kern, y_hist)[: y_hist.size]
        integral = h * (full - 0.5 * kern * y_hist[0] - 0.5 * kern[0] * y_hist)
        integral[0] = 0.0
        return phi0 * y_hist + integral
    beta = np.empty_like(y_hist)
    for j, tj in enumerate(t_grid):
        if j == 0:
            beta[j] = phi0 * y_hist[0]
            continue
        lag = tj - t_grid[: j + 1]
        kern = sign * sigma * wagner_phi_rate(sigma * lag, c, w)
        beta[j] = phi0 * y_hist[j] + np.trapezoid(kern * y_hist[: j + 1], t_grid[: j + 1])
    return beta


@dataclass(frozen=True)
class StripForces:
    """Per-strip aerodynamic force (world frame, N) split into lift and drag."""

    beta: np.ndarray
    force: np.ndarray
    lift: np.ndarray
    drag: np.ndarray

    @property
    def total(self):
        return self.force.sum(axis=0)


def strip_forces(beta, u_rel, chord_dir, span_dir, normal_dir, chord, width,
                 rho=1.225, cd0=0.1, cd90=2.0):
    """Strip forces from the response ``beta`` and the relative air velocity.

    Lift follows Kutta-Joukowski on the equivalent circulation
    ``pi * c * beta`` and is perpendicular to the in-section relative flow;
    drag is parallel to it with ``Cd = cd0 + cd90 * sin^2(alpha)``.
    """
    beta = np.asarray(beta, float)
    u_rel = np.atleast_2d(np.asarray(u_rel, float))
    u_perp = u_rel - np.sum(u_rel * span_dir, axis=1)[:, None] * span_dir
    U = np.linalg.norm(u_perp, axis=1)
    safe = np.where(U > 1e-12, U, 1.0)
    u_hat = np.where((U > 1e-12)[:, None], u_perp / safe[:, None], 0.0)
    uc = np.sum(u_hat * chord_dir, axis=1)
    un = np.sum(u_hat * normal_dir, axis=1)
    lift_dir = un[:, None] * chord_dir - uc[:, None] * normal_dir
    gamma_eq = np.pi * chord * beta
    lift = (rho * U * gamma_eq * width)[:, None] * lift_dir
    cd = cd0 + cd90 * un**2
    drag = (0.5 * rho * U**2 * chord * width * cd)[:, None] * u_hat
    return StripForces(beta=beta, force=lift + drag, lift=lift, drag=drag)


def decompose_tld(forces, R_body):
    """Body-frame thrust (x), lift (z) and signed drag magnitude per strip."""
    fb = forces.force @ R_body
    drag_mag = np.linalg.norm(forces.drag, axis=1)
    return fb[:, 0], fb[:, 2], drag_mag
