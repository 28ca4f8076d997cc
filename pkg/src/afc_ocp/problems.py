"""Problem definitions: coefficients, data, and manufactured solutions.

A problem bundles the diffusion coefficient, a divergence-free velocity
field, the control cost weight, box bounds on the control, the time horizon,
and the data functions (source, desired state, initial state).  The built-in
problems are manufactured: a state/co-state pair is chosen in closed form
and the source and desired state are derived from it through the optimality
system, with the exact control obtained by clamping the scaled co-state.
That makes every built-in problem a self-checking test case with known
convergence behaviour.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "ExactSolution",
    "ProblemSpec",
    "box_clamp",
    "builtin_problem",
    "BUILTIN_PROBLEMS",
]


def box_clamp(values, lower, upper):
    """Pointwise projection onto [lower, upper]."""
    return np.maximum(lower, np.minimum(upper, values))


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form state/co-state pair with the derivatives the data needs.

    All callables take (x, y, t) with array arguments; gradients return a
    (d/dx, d/dy) pair.
    """

    y: Callable
    y_t: Callable
    y_grad: Callable
    y_lap: Callable
    p: Callable
    p_t: Callable
    p_grad: Callable
    p_lap: Callable


@dataclass(frozen=True)
class ProblemSpec:
    """Everything a solve needs to know about one control problem."""

    name: str
    mu: float
    lam: float
    velocity: Callable
    source: Callable
    desired_state: Callable
    initial_state: Callable
    bounds: tuple
    horizon: float
    initial_state_grad: Optional[Callable] = None
    exact: Optional[ExactSolution] = None
    velocity_time_dependent: bool = False

    def validate(self):
        if self.mu <= 0.0:
            raise InvalidArgumentError(f"diffusion coefficient must be positive, got {self.mu}")
        if self.lam <= 0.0:
            raise InvalidArgumentError(f"control cost weight must be positive, got {self.lam}")
        if self.horizon <= 0.0:
            raise InvalidArgumentError(f"time horizon must be positive, got {self.horizon}")
        lower, upper = self.bounds
        if not lower < upper:
            raise InvalidArgumentError(
                f"control bounds must satisfy lower < upper, got ({lower}, {upper})"
            )

    def exact_control(self, x, y, t):
        """Clamped scaled co-state; only available for manufactured problems."""
        if self.exact is None:
            raise InvalidArgumentError(f"problem {self.name!r} has no exact solution")
        return box_clamp(-self.exact.p(x, y, t) / self.lam, *self.bounds)


def _manufactured(name, mu, lam, velocity, bounds, horizon, exact):
    """Derive source and desired state from a closed-form optimum.

    The state equation gives  G = y_t - mu lap(y) + b . grad(y) - u  with
    u the clamped scaled co-state, and the co-state equation gives
    y_d = y + p_t + mu lap(p) + b . grad(p).
    """
    lower, upper = bounds

    def source(x, y, t):
        gx, gy = exact.y_grad(x, y, t)
        bx, by = velocity(x, y, t)
        u = box_clamp(-exact.p(x, y, t) / lam, lower, upper)
        return exact.y_t(x, y, t) - mu * exact.y_lap(x, y, t) + bx * gx + by * gy - u

    def desired_state(x, y, t):
        px, py = exact.p_grad(x, y, t)
        bx, by = velocity(x, y, t)
        return exact.y(x, y, t) + exact.p_t(x, y, t) + mu * exact.p_lap(x, y, t) + bx * px + by * py

    return ProblemSpec(
        name=name,
        mu=mu,
        lam=lam,
        velocity=velocity,
        source=source,
        desired_state=desired_state,
        initial_state=lambda x, y: exact.y(x, y, 0.0),
        bounds=bounds,
        horizon=horizon,
        initial_state_grad=lambda x, y: exact.y_grad(x, y, 0.0),
        exact=exact,
    )


def _sine_bump():
    """sin(pi x) sin(pi y) and its derivatives, shared by two problems."""

    def q(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def qx(x, y):
        return np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)

    def qy(x, y):
        return np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)

    return q, qx, qy


def _smooth_problem(horizon):
    q, qx, qy = _sine_bump()
    tt = horizon

    def velocity(x, y, t):
        return 2.0, 3.0

    exact = ExactSolution(
        y=lambda x, y, t: t * q(x, y),
        y_t=lambda x, y, t: q(x, y) + 0.0 * t,
        y_grad=lambda x, y, t: (t * qx(x, y), t * qy(x, y)),
        y_lap=lambda x, y, t: -2.0 * np.pi**2 * t * q(x, y),
        p=lambda x, y, t: -((tt - t) ** 2) * q(x, y),
        p_t=lambda x, y, t: 2.0 * (tt - t) * q(x, y),
        p_grad=lambda x, y, t: (
            -((tt - t) ** 2) * qx(x, y),
            -((tt - t) ** 2) * qy(x, y),
        ),
        p_lap=lambda x, y, t: 2.0 * np.pi**2 * (tt - t) ** 2 * q(x, y),
    )
    return _manufactured(
        "convergence", mu=1.0, lam=1.0, velocity=velocity,
        bounds=(-1.0, 1.0), horizon=horizon, exact=exact,
    )


def _interior_layer_problem(horizon):
    mu = 1.0e-4
    tt = horizon
    c = 2.0 / np.sqrt(mu)

    def w(x, y):
        return 16.0 * x * (1.0 - x) * y * (1.0 - y)

    def wx(x, y):
        return 16.0 * (1.0 - 2.0 * x) * y * (1.0 - y)

    def wy(x, y):
        return 16.0 * x * (1.0 - x) * (1.0 - 2.0 * y)

    def wxx(x, y):
        return -32.0 * y * (1.0 - y)

    def wyy(x, y):
        return -32.0 * x * (1.0 - x)

    # zeta tracks the signed distance to the circle of radius 1/4 around the
    # centre, steepened by 2/sqrt(mu); phi smears the jump of a circular
    # front across that circle.
    def zeta(x, y):
        return c * (1.0 / 16.0 - (x - 0.5) ** 2 - (y - 0.5) ** 2)

    def phi(x, y):
        return 0.5 + np.arctan(zeta(x, y)) / np.pi

    def phi_x(x, y):
        z = zeta(x, y)
        return -2.0 * c * (x - 0.5) / (np.pi * (1.0 + z**2))

    def phi_y(x, y):
        z = zeta(x, y)
        return -2.0 * c * (y - 0.5) / (np.pi * (1.0 + z**2))

    def phi_xx(x, y):
        z = zeta(x, y)
        zx = -2.0 * c * (x - 0.5)
        return (-2.0 * c - 2.0 * z * zx**2 / (1.0 + z**2)) / (np.pi * (1.0 + z**2))

    def phi_yy(x, y):
        z = zeta(x, y)
        zy = -2.0 * c * (y - 0.5)
        return (-2.0 * c - 2.0 * z * zy**2 / (1.0 + z**2)) / (np.pi * (1.0 + z**2))

    def shape(x, y):
        return w(x, y) * phi(x, y)

    def shape_grad(x, y):
        return (
            wx(x, y) * phi(x, y) + w(x, y) * phi_x(x, y),
            wy(x, y) * phi(x, y) + w(x, y) * phi_y(x, y),
        )

    def shape_lap(x, y):
        return (
            wxx(x, y) * phi(x, y)
            + 2.0 * wx(x, y) * phi_x(x, y)
            + w(x, y) * phi_xx(x, y)
            + wyy(x, y) * phi(x, y)
            + 2.0 * wy(x, y) * phi_y(x, y)
            + w(x, y) * phi_yy(x, y)
        )

    def velocity(x, y, t):
        return x, -y

    exact = ExactSolution(
        y=lambda x, y, t: np.exp(-t) * shape(x, y),
        y_t=lambda x, y, t: -np.exp(-t) * shape(x, y),
        y_grad=lambda x, y, t: tuple(np.exp(-t) * g for g in shape_grad(x, y)),
        y_lap=lambda x, y, t: np.exp(-t) * shape_lap(x, y),
        p=lambda x, y, t: (tt - t) * shape(x, y),
        p_t=lambda x, y, t: -shape(x, y) + 0.0 * t,
        p_grad=lambda x, y, t: tuple((tt - t) * g for g in shape_grad(x, y)),
        p_lap=lambda x, y, t: (tt - t) * shape_lap(x, y),
    )
    return _manufactured(
        "interior_layer", mu=mu, lam=0.1, velocity=velocity,
        bounds=(-5.0, -1.0), horizon=horizon, exact=exact,
    )


def _boundary_layer_problem(horizon):
    mu = 1.0e-8
    tt = horizon
    # denom = 1 - exp(-1/mu); the subtrahend underflows to 0 for small mu.
    denom = 1.0 - np.exp(-1.0 / mu)
    shift = np.exp(-1.0 / mu)

    def eta(s):
        return s - (np.exp((s - 1.0) / mu) - shift) / denom

    def eta_p(s):
        return 1.0 - np.exp((s - 1.0) / mu) / (mu * denom)

    def eta_pp(s):
        return -np.exp((s - 1.0) / mu) / (mu**2 * denom)

    def velocity(x, y, t):
        return np.cos(np.pi / 4.0), np.sin(np.pi / 4.0)

    exact = ExactSolution(
        y=lambda x, y, t: np.exp(-t) * eta(x) * eta(y),
        y_t=lambda x, y, t: -np.exp(-t) * eta(x) * eta(y),
        y_grad=lambda x, y, t: (
            np.exp(-t) * eta_p(x) * eta(y),
            np.exp(-t) * eta(x) * eta_p(y),
        ),
        y_lap=lambda x, y, t: np.exp(-t) * (eta_pp(x) * eta(y) + eta(x) * eta_pp(y)),
        p=lambda x, y, t: (tt - t) * eta(1.0 - x) * eta(1.0 - y),
        p_t=lambda x, y, t: -eta(1.0 - x) * eta(1.0 - y) + 0.0 * t,
        # d/dx eta(1-x) = -eta'(1-x); the second derivative flips back.
        p_grad=lambda x, y, t: (
            -(tt - t) * eta_p(1.0 - x) * eta(1.0 - y),
            -(tt - t) * eta(1.0 - x) * eta_p(1.0 - y),
        ),
        p_lap=lambda x, y, t: (tt - t)
        * (eta_pp(1.0 - x) * eta(1.0 - y) + eta(1.0 - x) * eta_pp(1.0 - y)),
    )
    return _manufactured(
        "boundary_layer", mu=mu, lam=1.0, velocity=velocity,
        bounds=(-2.0, 2.0), horizon=horizon, exact=exact,
    )


def _traveling_wave_problem(horizon):
    mu = 1.0e-8
    tt = horizon
    rmu = np.sqrt(mu)
    q, qx, qy = _sine_bump()

    def front(x, y, t):
        return np.tanh((x + y - t - 0.5) / rmu)

    def velocity(x, y, t):
        return np.cos(np.pi / 3.0), np.sin(np.pi / 3.0)

    def y_fun(x, y, t):
        return 0.5 * q(x, y) * (front(x, y, t) + 1.0)

    def y_t(x, y, t):
        th = front(x, y, t)
        return -0.5 * q(x, y) * (1.0 - th**2) / rmu

    def y_grad(x, y, t):
        th = front(x, y, t)
        sech2 = 1.0 - th**2
        gx = 0.5 * (qx(x, y) * (th + 1.0) + q(x, y) * sech2 / rmu)
        gy = 0.5 * (qy(x, y) * (th + 1.0) + q(x, y) * sech2 / rmu)
        return gx, gy

    def y_lap(x, y, t):
        th = front(x, y, t)
        sech2 = 1.0 - th**2
        lap_q = -2.0 * np.pi**2 * q(x, y)
        cross = (qx(x, y) + qy(x, y)) * sech2 / rmu
        curvature = -2.0 * q(x, y) * th * sech2 / mu
        return 0.5 * lap_q * (th + 1.0) + cross + curvature

    exact = ExactSolution(
        y=y_fun,
        y_t=y_t,
        y_grad=y_grad,
        y_lap=y_lap,
        p=lambda x, y, t: -(tt - t) * q(x, y),
        p_t=lambda x, y, t: q(x, y) + 0.0 * t,
        p_grad=lambda x, y, t: (-(tt - t) * qx(x, y), -(tt - t) * qy(x, y)),
        p_lap=lambda x, y, t: 2.0 * np.pi**2 * (tt - t) * q(x, y),
    )
    return _manufactured(
        "traveling_wave", mu=mu, lam=1.0, velocity=velocity,
        bounds=(-2.0, 2.0), horizon=horizon, exact=exact,
    )


BUILTIN_PROBLEMS = {
    "convergence": (_smooth_problem, 1.0),
    "interior_layer": (_interior_layer_problem, 0.1),
    "boundary_layer": (_boundary_layer_problem, 0.1),
    "traveling_wave": (_traveling_wave_problem, 0.5),
}


def builtin_problem(name, horizon=None):
    """Instantiate a built-in problem, optionally overriding the horizon.

    The manufactured pair depends on the horizon through the co-state, so
    the override reshapes the data consistently.
    """
    try:
        builder, default_horizon = BUILTIN_PROBLEMS[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown problem {name!r}; available: {', '.join(sorted(BUILTIN_PROBLEMS))}"
        ) from None
    return builder(horizon if horizon is not None else default_horizon)
