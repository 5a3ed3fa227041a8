"""Independent verification of synthesized pulses.

Everything here re-simulates from the stored envelope samples (cubic
interpolation onto the verifier's grid) rather than reusing solver state:
noisy propagation of the full Schrodinger equation, phase-invariant gate
fidelity, disturbance sweeps with log-log slope fits, re-integration of
the error curves, and the Magnus reconstruction consistency check.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import algebra, dynamics, ode
from .model import ProblemSpec

INFIDELITY_FLOOR = 1e-10


@dataclass(eq=False)
class SweepResult:
    """Per-direction disturbance sweep with a fitted log-log slope."""

    epsilons: np.ndarray      # (G, n) disturbance tuples
    infidelities: np.ndarray  # (G,)
    fitted_slope: float | None
    fit_range: tuple


def fidelity(G, U) -> float:
    """Phase-invariant gate overlap ``(1/N) |tr(G^dag U)|``, clipped to [0, 1]."""
    G = np.asarray(G)
    U = np.asarray(U)
    if G.shape != U.shape:
        raise ValueError(f"dimension mismatch: {G.shape} vs {U.shape}")
    return float(min(abs(np.trace(G.conj().T @ U)) / G.shape[0], 1.0))


def as_control(source):
    """Normalize a pulse source into a callable ``t -> u``.

    Accepts a PulseSolution, an envelope table ``(t, u_1..u_m)`` or an
    already-callable control.  Tables are interpolated with a cubic
    spline, keeping verification independent of solver internals.
    """
    if callable(source):
        return source
    table = source.envelope if hasattr(source, "envelope") else np.asarray(source, dtype=float)
    spline = CubicSpline(table[:, 0], table[:, 1:], axis=0)
    return lambda t: spline(t)


def constant_control(amplitudes):
    """Constant envelope, e.g. the naive square pulse for a target rotation."""
    amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=float))
    return lambda t: amplitudes


def piecewise_constant_control(edges, values):
    """Step envelope: ``values[k]`` on ``[edges[k], edges[k+1])``."""
    edges = np.asarray(edges, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if len(edges) != len(values) + 1:
        raise ValueError("need one more edge than segment values")

    def u_of_t(t):
        k = min(max(np.searchsorted(edges, t, side="right") - 1, 0), len(values) - 1)
        return values[k]

    return u_of_t


def _default_steps(source, fallback: int = 1024) -> int:
    table = getattr(source, "envelope", None)
    if table is not None:
        return max(table.shape[0] - 1, 256)
    return fallback


def propagate_noisy(source, eps, spec: ProblemSpec, steps: int | None = None,
                    drift_scale: float = 1.0) -> np.ndarray:
    """Propagate the full noisy Schrodinger equation; returns U(T).

    ``eps`` is the tuple of disturbance magnitudes (a scalar is accepted
    for single-disturbance problems).
    """
    tbl = dynamics.tables(spec)
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    if eps.shape != (tbl.n,):
        raise ValueError(f"expected {tbl.n} disturbance magnitudes")
    if tbl.fict and hasattr(source, "unknowns"):
        drift_scale = float(np.asarray(source.unknowns)[-1])
    u_of_t = as_control(source)
    steps = steps or _default_steps(source)
    N = tbl.N

    def field(t, y):
        U = y[0 : N * N].reshape(N, N) + 1.0j * y[N * N :].reshape(N, N)
        H = dynamics.h_stack(tbl, np.atleast_1d(u_of_t(t)), drift_scale)
        Htot = H[0] + (eps[:, None, None] * H[1:]).sum(0)
        dU = -1.0j * (Htot @ U)
        return np.concatenate([dU.real.reshape(-1), dU.imag.reshape(-1)])

    y0 = np.concatenate([np.eye(N).reshape(-1), np.zeros(N * N)])
    yT = ode.rk4_final(field, y0, spec.horizon, steps)
    return yT[0 : N * N].reshape(N, N) + 1.0j * yT[N * N :].reshape(N, N)


def sweep(source, spec: ProblemSpec, axis, grid, floor: float = INFIDELITY_FLOOR,
          fit_range: tuple | None = None, steps: int | None = None) -> SweepResult:
    """Infidelity along one disturbance direction over a magnitude grid.

    ``axis`` is a 1-based disturbance index or an explicit direction
    vector.  The slope is a least-squares fit of log10(infidelity)
    against log10(magnitude), excluding points below ``floor`` and
    outside ``fit_range``; fewer than two usable points leave it None.
    """
    tbl = dynamics.tables(spec)
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be positive and strictly increasing")
    if np.isscalar(axis) or np.ndim(axis) == 0:
        direction = np.zeros(tbl.n)
        direction[int(axis) - 1] = 1.0
    else:
        direction = np.asarray(axis, dtype=float)
        if direction.shape != (tbl.n,):
            raise ValueError(f"direction must have {tbl.n} components")

    eps_rows = grid[:, None] * direction[None, :]
    infid = np.empty(len(grid))
    for g, row in enumerate(eps_rows):
        U = propagate_noisy(source, row, spec, steps=steps)
        infid[g] = 1.0 - fidelity(spec.target, U)

    lo, hi = fit_range if fit_range is not None else (grid[0], grid[-1])
    usable = (infid >= floor) & (grid >= lo) & (grid <= hi)
    if usable.sum() >= 2:
        slope = float(np.polyfit(np.log10(grid[usable]), np.log10(infid[usable]), 1)[0])
    else:
        slope = None
    return SweepResult(eps_rows, infid, slope, (float(lo), float(hi)))


def _state_only_field(tbl, spec, u_of_t, drift_scale):
    N, K, p = tbl.N, tbl.K, tbl.p

    def field(t, y):
        R = y[0 : N * N].reshape(N, N) + 1.0j * y[N * N : 2 * N * N].reshape(N, N)
        om = algebra.devectorize(y[2 * N * N :].reshape(p, K), N)
        Hu = dynamics.h_stack(tbl, np.atleast_1d(u_of_t(t)), drift_scale)
        dR = -1.0j * (Hu[0] @ R)
        dom = dynamics.omega_stack_rhs(tbl, om, dynamics.conjugated_noise(tbl, R, Hu))
        return np.concatenate(
            [dR.real.reshape(-1), dR.imag.reshape(-1), algebra.vectorize(dom).reshape(-1)]
        )

    return field


def audit_curves(source, spec: ProblemSpec, steps: int | None = None):
    """Re-integrate propagator and error curves from the stored envelope.

    Returns ``(times, R samples, coordinate curves per multi-index)``;
    the curves are the closed space curves in su(N) coordinates.
    """
    tbl = dynamics.tables(spec)
    drift_scale = 1.0
    if tbl.fict and hasattr(source, "unknowns"):
        drift_scale = float(np.asarray(source.unknowns)[-1])
    u_of_t = as_control(source)
    steps = steps or _default_steps(source)
    N, K, p = tbl.N, tbl.K, tbl.p
    y0 = np.concatenate([np.eye(N).reshape(-1), np.zeros(N * N + p * K)])
    traj = ode.rk4_integrate(_state_only_field(tbl, spec, u_of_t, drift_scale),
                             y0, spec.horizon, steps)
    R = traj.values[:, 0 : N * N].reshape(-1, N, N) + 1.0j * traj.values[
        :, N * N : 2 * N * N
    ].reshape(-1, N, N)
    coords = traj.values[:, 2 * N * N :].reshape(-1, p, K)
    curves = {idx: coords[:, row, :] for row, idx in enumerate(spec.multi_indices)}
    return traj.times, R, curves


def error_curve_audit(source, spec: ProblemSpec, steps: int | None = None) -> dict:
    """Final error-curve norms per multi-index, from an independent pass."""
    _, _, curves = audit_curves(source, spec, steps)
    return {idx: float(np.linalg.norm(c[-1])) for idx, c in curves.items()}


def magnus_consistency(source, spec: ProblemSpec, eps, steps: int | None = None) -> float:
    """Defect of the truncated-Magnus reconstruction against direct propagation.

    Rebuilds ``U(T) ~ R(T) exp(sum_idx eps^idx Omega_idx(T))`` from audited
    curves; the Frobenius defect should scale like the first dropped order.
    """
    tbl = dynamics.tables(spec)
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    if eps.shape != (tbl.n,):
        raise ValueError(f"expected {tbl.n} disturbance magnitudes")
    _, R, curves = audit_curves(source, spec, steps)
    total = np.zeros(tbl.K)
    for idx, c in curves.items():
        weight = np.prod([eps[i - 1] for i in idx])
        total = total + weight * c[-1]
    U_pred = R[-1] @ algebra.expm(algebra.devectorize(total, tbl.N))
    U_true = propagate_noisy(source, eps, spec, steps=steps)
    return float(np.linalg.norm(U_pred - U_true))
