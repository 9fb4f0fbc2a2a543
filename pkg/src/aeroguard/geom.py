"""Small spatial-math kernel.

Euler angles follow the Z-Y-X (yaw-pitch-roll) composition,
``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``, and map body vectors to the world.
"""

import numpy as np

GIMBAL_TOL = 1e-6


class GimbalProximityError(ValueError):
    """Pitch too close to +-pi/2 for the Euler parameterization."""


class NonFiniteError(ValueError):
    """A NaN or Inf entered a quantity that must stay finite."""


def check_finite(x, name="value"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return x


def _check_pitch(pitch):
    if abs(abs(pitch) - np.pi / 2) < GIMBAL_TOL:
        raise GimbalProximityError(f"pitch {pitch!r} is within {GIMBAL_TOL} of +-pi/2")


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(q):
    """Rotation matrix for Euler angles ``q = (roll, pitch, yaw)``.

    Raises
    ------
    GimbalProximityError
        If the pitch is within ``GIMBAL_TOL`` of +-pi/2.
    """
    roll, pitch, yaw = check_finite(q, "euler angles")
    _check_pitch(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def rotation_to_euler(R):
    """Inverse of :func:`euler_to_rotation` (pitch in [-pi/2, pi/2])."""
    R = np.asarray(R, dtype=float)
    pitch = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
    roll = np.arctan2(R[2, 1], R[2, 2])
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return np.array([roll, pitch, yaw])


def hat(w):
    """Skew-symmetric matrix with ``hat(w) @ v == cross(w, v)``."""
    return np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )


def cross(a, b):
    """Row-wise cross product; a faster stand-in for ``np.cross`` on (..., 3)."""
    a = np.asarray(a)
    b = np.asarray(b)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def vee(S):
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def euler_rate_matrix(q):
    """Matrix ``W`` with ``euler_rates = W @ omega_body``."""
    roll, pitch, _ = q
    _check_pitch(pitch)
    sr, cr = np.sin(roll), np.cos(roll)
    cp, tp = np.cos(pitch), np.tan(pitch)
    return np.array(
        [
            [1.0, sr * tp, cr * tp],
            [0.0, cr, -sr],
            [0.0, sr / cp, cr / cp],
        ]
    )


def euler_rate_matrix_dot(q, qdot):
    """Time derivative of :func:`euler_rate_matrix` along ``qdot``."""
    roll, pitch, _ = q
    _check_pitch(pitch)
    dr, dp = qdot[0], qdot[1]
    sr, cr = np.sin(roll), np.cos(roll)
    cp, sp, tp = np.cos(pitch), np.sin(pitch), np.tan(pitch)
    sec2 = 1.0 / cp**2
    return np.array(
        [
            [0.0, cr * tp * dr + sr * sec2 * dp, -sr * tp * dr + cr * sec2 * dp],
            [0.0, -sr * dr, -cr * dr],
            [
                0.0,
                cr / cp * dr + sr * sp * sec2 * dp,
                -sr / cp * dr + cr * sp * sec2 * dp,
            ],
        ]
    )


def euler_rates_from_body_omega(q, omega):
    return euler_rate_matrix(check_finite(q, "euler angles")) @ np.asarray(omega, float)


def body_omega_from_euler_rates(q, qdot):
    return np.linalg.solve(euler_rate_matrix(q), np.asarray(qdot, float))


def orthonormalize(R):
    """Nearest rotation matrix in the Frobenius sense (polar factor)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0.0:
        U[:, -1] *= -1.0
        Q = U @ Vt
    return Q


def wrap_angle(a):
    """Wrap to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi
