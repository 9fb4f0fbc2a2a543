import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aeroguard.control import (
    ControllerConfig,
    ObserverDivergenceError,
    ObserverState,
    PlantTerms,
    TuningError,
    allocate,
    cancellation_law,
    control_law,
    error_dynamics_matrix,
    hover_setpoint_error,
    level_g3,
    observer_step,
    outer_loop,
    plant_terms,
    tilt_from_force,
    tune_observer,
)
from aeroguard.geom import euler_to_rotation
from aeroguard.vehicle import GuardParams, mixing_matrix

GP = GuardParams()


def _scalar_terms():
    return PlantTerms(g1=np.zeros(1), g2=np.eye(1), g3=np.eye(1))


def _run_scalar(omega0, x3_true, duration, dt=2e-3, x0=(0.0, 0.0, 0.0)):
    """Double integrator with an additive disturbance, observer at rate 1/dt."""
    gains = tune_observer(omega0, np.eye(1))
    terms = _scalar_terms()
    obs = ObserverState(*(np.array([v]) for v in x0))
    x = np.zeros(2)
    n = int(round(duration / dt))
    e3 = np.empty(n)
    for k in range(n):
        t = k * dt
        obs = observer_step(obs, x[:1], np.zeros(1), terms, gains, dt)
        # exact propagation of the true plant under the disturbance
        d = x3_true(t)
        x = np.array([x[0] + x[1] * dt + 0.5 * d * dt * dt, x[1] + d * dt])
        e3[k] = obs.x3[0] - x3_true(t + dt)
    return obs, x, e3


# -- observer tuning -----------------------------------------------------------

def test_default_gains():
    g = tune_observer(10.0, np.eye(1))
    assert (g.beta1[0, 0], g.beta2[0, 0], g.beta3[0, 0]) == (30.0, 300.0, 1000.0)


@given(st.floats(0.5, 200.0))
def test_error_poles_at_minus_omega0(omega0):
    A = error_dynamics_matrix(tune_observer(omega0, level_g3(GP)), level_g3(GP))
    # characteristic polynomial of each axis is (s + w0)^3
    P = np.poly(A[np.ix_([0, 6, 12], [0, 6, 12])])
    np.testing.assert_allclose(P, np.poly([-omega0] * 3), rtol=1e-9)
    assert np.max(np.linalg.eigvals(A).real) < 0


def test_triple_pole_real_part():
    w0 = 10.0
    A = error_dynamics_matrix(tune_observer(w0, np.eye(1)), np.eye(1))
    # a defective triple root is only resolved to ~eps^(1/3)
    assert abs(np.max(np.linalg.eigvals(A).real) + w0) < 1e-3
    np.testing.assert_allclose(np.poly(A), [1, 30, 300, 1000], rtol=1e-12)


@pytest.mark.parametrize("omega0", [0.0, -1.0])
def test_tuning_rejects_bad_bandwidth(omega0):
    with pytest.raises(TuningError):
        tune_observer(omega0, np.eye(1))


def test_tuning_rejects_singular_map():
    with pytest.raises(TuningError):
        tune_observer(10.0, np.zeros((2, 2)))


# -- observer behaviour -----------------------------------------------------------

def test_zero_error_is_stationary():
    gains = tune_observer(10.0, np.eye(1))
    obs = ObserverState(np.array([1.0]), np.array([0.0]), np.array([0.0]))
    new = observer_step(obs, np.array([1.0]), np.zeros(1), _scalar_terms(), gains, 1e-3)
    np.testing.assert_array_equal(new.as_array(), obs.as_array())


def test_initial_error_decays():
    gains = tune_observer(10.0, np.eye(1))
    obs = ObserverState(np.array([1.0]), np.array([0.0]), np.array([0.0]))
    for _ in range(1000):
        obs = observer_step(obs, np.zeros(1), np.zeros(1), _scalar_terms(), gains, 2e-3)
    # exp(2 A) e(0) evaluated in extended precision
    np.testing.assert_allclose(obs.as_array(), [3.31845733e-7, 7.00792232e-6, 3.71007652e-5], rtol=1e-6)
    assert abs(obs.x1[0]) < 1e-6


def test_constant_disturbance_recovered():
    # the held measurement leaves a bias of second order in the observer step
    errs = [abs(_run_scalar(10.0, lambda t: 0.7, 2.0, dt)[0].x3[0] - 0.7) for dt in (1e-3, 5e-4)]
    assert errs[1] < 5e-5
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_ramp_lag_scaling_with_bandwidth():
    """Steady lag to a ramp: e1 shrinks as w0^-3, e3 as w0^-1."""
    def lags(w0):
        gains = tune_observer(w0, np.eye(1))
        A = error_dynamics_matrix(gains, np.eye(1))
        # ramp d = r t: steady error solves A e = -[0, 0, r]
        return np.linalg.solve(A, [0.0, 0.0, -1.0])

    a, b = lags(10.0), lags(20.0)
    assert a[0] / b[0] == pytest.approx(8.0)
    assert a[2] / b[2] == pytest.approx(2.0)


def test_divergence_guard():
    gains = tune_observer(10.0, np.eye(1))
    obs = ObserverState(np.array([5.0]), np.zeros(1), np.zeros(1))
    with pytest.raises(ObserverDivergenceError):
        observer_step(obs, np.zeros(1), np.zeros(1), _scalar_terms(), gains, 1e-3, ceiling=1.0)


# -- control law ----------------------------------------------------------------

CC = ControllerConfig()


def test_hover_setpoint_error_one_centimetre():
    err = hover_setpoint_error(np.array([0.01, 0, 0, 0, 0, 0]), CC)
    np.testing.assert_allclose(err, [-0.01, 0, 0, 0, 0, 0])


def test_outer_loop_zero_at_setpoint():
    assert np.all(outer_loop(np.zeros(6), np.zeros(6), CC) == 0)


vec6 = arrays(np.float64, 6, elements=st.floats(-0.3, 0.3))


@given(vec6, vec6)
def test_outer_loop_linear_in_velocity(x2a, x2b):
    x1 = np.zeros(6)
    lhs = outer_loop(x1, x2a + x2b, CC)
    rhs = outer_loop(x1, x2a, CC) + outer_loop(x1, x2b, CC)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@given(vec6, vec6, vec6)
def test_cancellation_delivers_u0(x1, x2, x3):
    terms = plant_terms(x1, x2, GP)
    u0 = outer_loop(x1, x2, CC)
    u, inertial, aero = cancellation_law(u0, terms, x3)
    acc = terms.g1 + terms.g2 @ u + terms.g3 @ x3
    np.testing.assert_allclose(acc, u0, atol=1e-9)
    np.testing.assert_allclose(terms.g2 @ inertial, terms.g1, atol=1e-9)


def test_hover_equilibrium_needs_only_weight():
    terms = plant_terms(np.zeros(6), np.zeros(6), GP)
    obs = ObserverState.zeros()
    out = control_law(obs, np.zeros(6), np.zeros(6), terms, CC)
    np.testing.assert_allclose(out.wrench, [0, 0, GP.mass * 9.8, 0, 0, 0], atol=1e-15)
    assert out.tilt == (0.0, 0.0)


def test_tilt_follows_force_direction():
    roll, pitch = tilt_from_force(np.array([0.1, 0.0, 1.0]), 0.0)
    assert roll == pytest.approx(0.0) and pitch == pytest.approx(np.arctan(0.1))
    R = euler_to_rotation([*tilt_from_force(np.array([0.05, -0.2, 1.0]), 0.3), 0.3])
    b = np.array([0.05, -0.2, 1.0])
    np.testing.assert_allclose(R[:, 2], b / np.linalg.norm(b), atol=1e-12)
    assert tilt_from_force(np.array([1.0, 0, 0.1]), 0.0, max_tilt=0.2)[1] == 0.2


# -- allocation ---------------------------------------------------------------

def test_allocate_zero():
    a = allocate(np.zeros(4), GP)
    assert np.all(a.command == 0) and not a.saturated and a.achievable


def test_allocate_hover_is_exact():
    w = np.array([0.98, 0.01, -0.02, 0.003])
    a = allocate(w, GP)
    np.testing.assert_allclose(mixing_matrix(GP) @ a.command, w, atol=1e-12)
    assert a.achievable


def test_allocate_pure_yaw_uses_yaw_pair_and_balanced_vertical():
    a = allocate(np.array([0.0, 0.0, 0.0, 0.02]), GP)
    # negative thrusts are clamped, so a pure yaw moment from rest is not achievable
    assert a.saturated and not a.achievable
    a = allocate(np.array([1.0, 0.0, 0.0, 0.02]), GP)
    assert a.achievable
    np.testing.assert_allclose(a.achieved, [1.0, 0.0, 0.0, 0.02], atol=1e-12)


def test_allocate_flags_excess_thrust():
    a = allocate(np.array([10.0, 0, 0, 0]), GP)
    assert a.saturated and not a.achievable
    assert np.all(a.command <= GP.f_max)
