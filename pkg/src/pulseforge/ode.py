"""Fixed-step classical Runge-Kutta integration with dense storage.

Fixed steps keep trajectories deterministic and smooth in the initial
conditions, which the shooting Jacobian relies on; the step count that
meets the accuracy target is found by step-doubling comparison
(:func:`refine_check`) rather than by an embedded error estimate.
"""

from dataclasses import dataclass

import numpy as np

from .dual import Dual, value


@dataclass(eq=False)
class Trajectory:
    """Uniformly sampled solution: times (S+1,), values (S+1, dim)."""

    times: np.ndarray
    values: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def _rk4_step(field, t, y, h):
    k1 = field(t, y)
    k2 = field(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = field(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = field(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(field, y0, T: float, steps: int) -> Trajectory:
    """Integrate ``dy/dt = field(t, y)`` over [0, T], storing every step."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if T <= 0:
        raise ValueError("horizon must be positive")
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    h = T / steps
    out = np.empty((steps + 1, y.size))
    out[0] = y
    for k in range(steps):
        y = _rk4_step(field, k * h, y, h)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"non-finite state at step {k + 1}")
        out[k + 1] = y
    return Trajectory(np.linspace(0.0, T, steps + 1), out)


def rk4_final(field, y0, T: float, steps: int):
    """Final state only; accepts Dual initial values for derivative passes."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    y = y0
    h = T / steps
    for k in range(steps):
        y = _rk4_step(field, k * h, y, h)
        if isinstance(y, Dual):
            if not (np.all(np.isfinite(y.val)) and np.all(np.isfinite(y.eps))):
                raise FloatingPointError(f"non-finite state at step {k + 1}")
        elif not np.all(np.isfinite(y)):
            raise FloatingPointError(f"non-finite state at step {k + 1}")
    return y


def refine_check(field, y0, T: float, start: int = 256, tol: float = 1e-9,
                 max_steps: int = 2 ** 16) -> tuple[int, float]:
    """Double the step count until the endpoint stops moving.

    Returns the accepted step count and the final sup-norm defect between
    consecutive refinements.
    """
    steps = start
    y_prev = value(rk4_final(field, y0, T, steps))
    while steps <= max_steps:
        y_next = value(rk4_final(field, y0, T, 2 * steps))
        defect = float(np.max(np.abs(y_next - y_prev)))
        if defect <= tol:
            return steps, defect
        steps *= 2
        y_prev = y_next
    raise RuntimeError(
        f"step refinement did not converge below {tol:g} by {max_steps} steps: "
        "stiff or discontinuous field"
    )
