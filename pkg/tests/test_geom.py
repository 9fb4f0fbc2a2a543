import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aeroguard.geom import (
    GimbalProximityError,
    NonFiniteError,
    body_omega_from_euler_rates,
    cross,
    euler_rate_matrix,
    euler_rate_matrix_dot,
    euler_rates_from_body_omega,
    euler_to_rotation,
    hat,
    orthonormalize,
    rotation_to_euler,
    vee,
    wrap_angle,
)

angles = st.tuples(
    st.floats(-np.pi + 1e-3, np.pi - 1e-3),
    st.floats(-1.5, 1.5),
    st.floats(-np.pi + 1e-3, np.pi - 1e-3),
).map(np.array)
vec3 = arrays(np.float64, 3, elements=st.floats(-10, 10))


def test_identity_rotation():
    np.testing.assert_array_equal(euler_to_rotation([0, 0, 0]), np.eye(3))


def test_yaw_quarter_turn_maps_axes():
    R = euler_to_rotation([0, 0, np.pi / 2])
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(R @ [0, 1, 0], [-1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(R @ [0, 0, 1], [0, 0, 1], atol=1e-15)


def test_roll_half_turn():
    np.testing.assert_allclose(euler_to_rotation([np.pi, 0, 0]), np.diag([1, -1, -1]), atol=1e-15)


def test_zyx_composition_order():
    q = np.array([0.3, -0.2, 1.1])

    def rx(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])

    def ry(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])

    def rz(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])

    np.testing.assert_allclose(euler_to_rotation(q), rz(q[2]) @ ry(q[1]) @ rx(q[0]), atol=1e-15)


@pytest.mark.parametrize("pitch", [np.pi / 2, -np.pi / 2, np.pi / 2 - 1e-7])
def test_gimbal_proximity_rejected(pitch):
    with pytest.raises(GimbalProximityError):
        euler_to_rotation([0.1, pitch, 0.2])


def test_non_finite_rejected():
    with pytest.raises(NonFiniteError):
        euler_to_rotation([np.nan, 0, 0])


@given(angles)
def test_rotation_is_proper(q):
    R = euler_to_rotation(q)
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


@given(angles)
def test_euler_round_trip(q):
    np.testing.assert_allclose(rotation_to_euler(euler_to_rotation(q)), q, atol=1e-9)


def test_hat_examples():
    np.testing.assert_array_equal(hat([0, 0, 0]), np.zeros((3, 3)))
    np.testing.assert_array_equal(hat([0, 0, 1]) @ [1, 0, 0], [0, 1, 0])
    H = hat([1, 2, 3])
    np.testing.assert_array_equal(H + H.T, np.zeros((3, 3)))


@given(vec3, vec3)
def test_hat_matches_cross_product(w, v):
    np.testing.assert_allclose(hat(w) @ v, np.cross(w, v), atol=1e-12)
    np.testing.assert_allclose(cross(w, v), np.cross(w, v), atol=1e-12)
    np.testing.assert_array_equal(vee(hat(w)), w)


def test_rowwise_cross_matches_numpy(rng):
    a = rng.normal(size=(7, 3))
    b = rng.normal(size=(7, 3))
    np.testing.assert_allclose(cross(a, b), np.cross(a, b), atol=1e-15)
    np.testing.assert_allclose(cross(a[0], b), np.cross(a[0], b), atol=1e-15)


@pytest.mark.parametrize("omega", [[1, 0, 0], [0, 0, 1]])
def test_aligned_frames_rates_equal_omega(omega):
    np.testing.assert_allclose(euler_rates_from_body_omega([0, 0, 0], omega), omega)


def test_euler_rates_against_finite_difference():
    q = np.array([0.1, 0.2, 0.3])
    w = np.array([0.3, -0.1, 0.2])
    qd = euler_rates_from_body_omega(q, w)
    h = 1e-7
    # oracle: R(q + h qd) must equal R(q) exp(h hat(w)) to first order
    R0 = euler_to_rotation(q)
    dR = (euler_to_rotation(q + h * qd) - euler_to_rotation(q - h * qd)) / (2 * h)
    np.testing.assert_allclose(vee(R0.T @ dR), w, atol=1e-6)


@given(angles, vec3)
def test_rate_maps_are_inverse(q, w):
    qd = euler_rates_from_body_omega(q, w)
    np.testing.assert_allclose(body_omega_from_euler_rates(q, qd), w, atol=1e-8 * (1 + np.abs(qd).max()))


def test_rate_matrix_derivative_finite_difference():
    q = np.array([0.4, -0.3, 0.8])
    qd = np.array([0.7, 0.2, -0.5])
    h = 1e-6
    fd = (euler_rate_matrix(q + h * qd) - euler_rate_matrix(q - h * qd)) / (2 * h)
    np.testing.assert_allclose(euler_rate_matrix_dot(q, qd), fd, atol=1e-8)


@given(arrays(np.float64, (3, 3), elements=st.floats(-0.05, 0.05)), angles)
def test_orthonormalize_recovers_nearby_rotation(noise, q):
    R = euler_to_rotation(q)
    Q = orthonormalize(R + 1e-3 * noise)
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-12)
    assert np.linalg.det(Q) > 0
    np.testing.assert_allclose(Q, R, atol=1e-3)


@given(st.floats(-100, 100))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -np.pi <= w < np.pi
    assert np.isclose(np.cos(w), np.cos(a), atol=1e-9) and np.isclose(np.sin(w), np.sin(a), atol=1e-9)
