"""Fixed-step classical Runge-Kutta integration."""

import numpy as np


class IntegrationError(RuntimeError):
    """Raised when a derivative or an integrated state becomes non-finite."""

    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} at t={t:.6g} s")
        self.t = t


def rk4_step(f, t, x, dt, post=None):
    """Advance ``x' = f(t, x)`` by one classical RK4 step.

    ``post`` is applied to the result (used for rotation re-orthonormalization).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    x_new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_new)):
        raise IntegrationError("non-finite state after RK4 step", t + dt)
    if post is not None:
        x_new = post(x_new)
    return x_new
