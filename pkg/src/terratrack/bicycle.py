"""Kinematic bicycle model used by the tracking controller.

State vector: [s_x, s_y, heading phi, steering theta, speed v].
Input vector: [throttle a (normalized), steering rate omega].
All functions broadcast over leading batch dimensions.
"""

from __future__ import annotations

import numpy as np

STATE_DIM = 5
INPUT_DIM = 2

WHEELBASE_L = 2.75      # m
CG_TO_REAR_LR = 1.75    # m
ACCEL_SCALE = 5.0       # m/s^2 per unit throttle


def slip_angle(theta, wheelbase: float = WHEELBASE_L, cg_to_rear: float = CG_TO_REAR_LR):
    return np.arctan(cg_to_rear / wheelbase * np.tan(theta))


def dynamics_rhs(x, u, wheelbase: float = WHEELBASE_L, cg_to_rear: float = CG_TO_REAR_LR,
                 accel_scale: float = ACCEL_SCALE):
    """Continuous-time state derivative, shape (..., 5)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    phi, theta, v = x[..., 2], x[..., 3], x[..., 4]
    beta = slip_angle(theta, wheelbase, cg_to_rear)
    out = np.empty_like(x)
    out[..., 0] = v * np.cos(phi + beta)
    out[..., 1] = v * np.sin(phi + beta)
    out[..., 2] = v / wheelbase * np.tan(beta)
    out[..., 3] = u[..., 1]
    out[..., 4] = accel_scale * u[..., 0]
    return out


def rk4_step(x, u, dt: float, wheelbase: float = WHEELBASE_L,
             cg_to_rear: float = CG_TO_REAR_LR, accel_scale: float = ACCEL_SCALE):
    """Order-4 one-step integration of the bicycle dynamics."""
    k1 = dynamics_rhs(x, u, wheelbase, cg_to_rear, accel_scale)
    k2 = dynamics_rhs(x + 0.5 * dt * k1, u, wheelbase, cg_to_rear, accel_scale)
    k3 = dynamics_rhs(x + 0.5 * dt * k2, u, wheelbase, cg_to_rear, accel_scale)
    k4 = dynamics_rhs(x + dt * k3, u, wheelbase, cg_to_rear, accel_scale)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def lateral_accel(x, wheelbase: float = WHEELBASE_L):
    """Lateral acceleration magnitude proxy v^2 * tan(theta) / L, signed like theta."""
    x = np.asarray(x, dtype=float)
    return x[..., 4] ** 2 * np.tan(x[..., 3]) / wheelbase


def lateral_accel_gradient(x, wheelbase: float = WHEELBASE_L):
    """d(lateral_accel)/dx for a single state, shape (5,)."""
    theta, v = x[3], x[4]
    g = np.zeros(STATE_DIM)
    g[3] = v ** 2 / (np.cos(theta) ** 2 * wheelbase)
    g[4] = 2.0 * v * np.tan(theta) / wheelbase
    return g
