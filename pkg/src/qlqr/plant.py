"""Cart-pole dynamics: nonlinear equations of motion, forward-Euler
stepping, and the analytic linearization about the upright equilibrium.

State ordering everywhere is x = [theta, theta_dot, y, y_dot]: pendulum
angle from upright (rad), its rate (rad/s), cart position (m) and cart
velocity (m/s).  The input u is the horizontal force on the cart (N).
The pendulum is a point mass on a massless rod and friction is zero, so
with s = sin(theta), c = cos(theta):

    theta_dd = (u c - (M+m) g s + m l theta_dot^2 c s) / (m l c^2 - (M+m) l)
    y_dd     = (u + m l theta_dot^2 s - m g s c) / (M + m - m c^2)

where m is the pendulum mass, M the cart mass, l the rod length.  Both
denominators are bounded away from zero for any positive parameters.

Parameters are immutable values; a mid-run fault is modelled by
swapping in the value returned by apply_fault, never by mutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonFiniteState(Exception):
    """State or input contains NaN or Inf."""


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the cart-pole."""

    m: float = 0.2       # pendulum point mass, kg
    m_cart: float = 0.5  # cart mass, kg
    l: float = 0.3       # rod length, m
    g: float = 9.8       # gravitational acceleration, m/s^2

    def __post_init__(self):
        for name in ("m", "m_cart", "l", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class LinearModel:
    """Discrete-time linear dynamics x_next = a x + b u."""

    a: np.ndarray   # 4x4 state matrix
    b: np.ndarray   # 4x1 input matrix
    dt: float


def derivatives(x, u, p: PlantParams):
    """Time derivative of the state under force u."""
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(x)) and np.isfinite(u)):
        raise NonFiniteState("non-finite state or input")
    theta, theta_dot = x[0], x[1]
    s, c = np.sin(theta), np.cos(theta)
    m, mc, l, g = p.m, p.m_cart, p.l, p.g
    theta_dd = (u * c - (mc + m) * g * s + m * l * theta_dot**2 * c * s) / (
        m * l * c**2 - (mc + m) * l
    )
    y_dd = (u + m * l * theta_dot**2 * s - m * g * s * c) / (mc + m - m * c**2)
    return np.array([theta_dot, theta_dd, x[3], y_dd])


def euler_step(x, u, p: PlantParams, dt: float):
    """One forward-Euler step of the nonlinear dynamics."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    x = np.asarray(x, dtype=float)
    return x + dt * derivatives(x, u, p)


def linearize(p: PlantParams, dt: float) -> LinearModel:
    """Euler-discretized linearization at the upright equilibrium.

    The continuous-time Jacobians at (x=0, u=0) have the closed form
    below; discretization matches the integrator: a = I + dt*a_c,
    b = dt*b_c.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    m, mc, l, g = p.m, p.m_cart, p.l, p.g
    a_c = np.zeros((4, 4))
    b_c = np.zeros((4, 1))
    a_c[0, 1] = 1.0
    a_c[2, 3] = 1.0
    a_c[1, 0] = (mc + m) * g / (mc * l)
    b_c[1, 0] = -1.0 / (mc * l)
    a_c[3, 0] = -m * g / mc
    b_c[3, 0] = 1.0 / mc
    return LinearModel(a=np.eye(4) + dt * a_c, b=dt * b_c, dt=float(dt))


def apply_fault(p: PlantParams, scale_m: float, scale_l: float) -> PlantParams:
    """New parameters with the pendulum mass and length rescaled."""
    if not (scale_m > 0 and scale_l > 0):
        raise ValueError("scale factors must be > 0")
    return PlantParams(m=p.m * scale_m, m_cart=p.m_cart, l=p.l * scale_l, g=p.g)
