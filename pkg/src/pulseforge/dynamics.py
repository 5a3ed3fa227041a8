"""State equations: ideal propagator flow and error-curve recursion.

The augmented state is the ideal propagator R together with one error
curve per disturbance multi-index (orders 1..3 use the explicit nested
commutator equations with Bernoulli coefficients 1, -1/2, 1/6) and, with
smoothing, the physical control values as integrator states.

Two surfaces are provided: structured :class:`AugmentedState` objects for
the public API, and flat-array kernels (``decode_state`` / ``state_rhs_flat``)
shared with the costate flow.  The kernels are written against the dual
number surface so directional derivatives can be pushed through unchanged.
"""

from dataclasses import dataclass
from functools import lru_cache
from types import SimpleNamespace

import numpy as np

from . import algebra
from .dual import concat
from .model import FICTITIOUS_DRIFT, ProblemSpec


@dataclass(eq=False)
class AugmentedState:
    """Propagator, error curves keyed by multi-index, optional control state."""

    R: np.ndarray
    omegas: dict
    u_state: np.ndarray | None = None
    drift_scale: float | None = None


@lru_cache(maxsize=64)
def tables(spec: ProblemSpec):
    """Precomputed stacks and layout offsets for one validated spec."""
    if not spec.validated:
        raise ValueError("spec must pass model.validate first")
    N, K, n, m, p = spec.dimension, spec.coord_dim, spec.n, spec.m, spec.p
    H0 = np.array([t.drift for t in spec.terms])
    Hc = np.array([[c for c in t.controls] for t in spec.terms])

    idx_pos = {idx: row for row, idx in enumerate(spec.multi_indices)}
    o1 = [idx for idx in spec.multi_indices if len(idx) == 1]
    o2 = [idx for idx in spec.multi_indices if len(idx) == 2]
    o3 = [idx for idx in spec.multi_indices if len(idx) == 3]
    # gather arrays: noise labels are 1-based, stacks of conjugated noise
    # generators are 0-based
    o1_last = np.array([idx[0] - 1 for idx in o1], dtype=int)
    o2_parent = np.array([idx_pos[idx[:1]] for idx in o2], dtype=int)
    o2_last = np.array([idx[1] - 1 for idx in o2], dtype=int)
    o3_parent2 = np.array([idx_pos[idx[:2]] for idx in o3], dtype=int)
    o3_first = np.array([idx_pos[idx[:1]] for idx in o3], dtype=int)
    o3_second = np.array([idx_pos[(idx[1],)] for idx in o3], dtype=int)
    o3_last = np.array([idx[2] - 1 for idx in o3], dtype=int)

    # noise control matrices that are actually nonzero, for the optimal
    # control / integrator costate inner products
    noise_ctrl = [
        (i, j)
        for i in range(1, n + 1)
        for j in range(m)
        if np.linalg.norm(Hc[i, j]) > 0
    ]

    smoothing = spec.smoothing == 1
    fict = spec.drift_mode == FICTITIOUS_DRIFT
    off_R = 0
    off_om = 2 * N * N
    off_u = off_om + p * K
    off_u0 = off_u + (m if smoothing else 0)
    state_dim = off_u0 + (1 if fict else 0)
    costate_dim = (p + 1) * K + (m if smoothing else 0)

    return SimpleNamespace(
        N=N, K=K, n=n, m=m, p=p,
        H0=H0, Hc=Hc,
        n1=len(o1), n2=len(o2), n3=len(o3),
        o1_last=o1_last,
        o2_parent=o2_parent, o2_last=o2_last,
        o3_parent2=o3_parent2, o3_first=o3_first, o3_second=o3_second, o3_last=o3_last,
        noise_ctrl=noise_ctrl,
        smoothing=smoothing, fict=fict,
        off_om=off_om, off_u=off_u, off_u0=off_u0,
        state_dim=state_dim, costate_dim=costate_dim,
        eye=np.eye(N, dtype=complex),
    )


def state_dim(spec: ProblemSpec) -> int:
    return tables(spec).state_dim


# --- flat kernels -----------------------------------------------------------


def h_stack(tbl, u, drift_scale):
    """All Hamiltonian terms H^(i)(u) as an (n+1, N, N) stack."""
    H = drift_scale * tbl.H0
    if tbl.m:
        H = H + (u[None, :, None, None] * tbl.Hc).sum(-3)
    return H


def decode_state(tbl, y):
    """Flat state block -> (R, omega stack, u values, drift scale)."""
    N, K, p = tbl.N, tbl.K, tbl.p
    R = y[0 : N * N].reshape((N, N)) + 1.0j * y[N * N : 2 * N * N].reshape((N, N))
    om = algebra.devectorize(y[tbl.off_om : tbl.off_om + p * K].reshape((p, K)), N)
    u = y[tbl.off_u : tbl.off_u + tbl.m] if tbl.smoothing else None
    scale = y[tbl.off_u0] if tbl.fict else 1.0
    return R, om, u, scale


def encode_state(tbl, R, om, u, drift_scale):
    """Inverse of :func:`decode_state`; also encodes tangents."""
    parts = [
        R.real.reshape((tbl.N * tbl.N,)),
        R.imag.reshape((tbl.N * tbl.N,)),
        algebra.vectorize(om).reshape((tbl.p * tbl.K,)),
    ]
    if tbl.smoothing:
        parts.append(u)
    if tbl.fict:
        parts.append(np.atleast_1d(drift_scale))
    return concat(parts)


def conjugated_noise(tbl, R, Hu):
    """Stack of -i R^dag H^(i)(u) R for the n noise generators."""
    return -1.0j * (algebra.dagger(R) @ Hu[1:] @ R)


def omega_stack_rhs(tbl, om, A):
    """Error-curve velocities for the whole stack.

    ``A`` is the conjugated-noise stack from :func:`conjugated_noise`.
    Order 1 rows are A itself; orders 2 and 3 use the nested-commutator
    truncation of the d(exp)-inverse series.
    """
    parts = [A[tbl.o1_last]]
    if tbl.n2:
        parts.append(-0.5 * algebra.commutator(om[tbl.o2_parent], A[tbl.o2_last]))
    if tbl.n3:
        inner3 = algebra.commutator(om[tbl.o3_second], A[tbl.o3_last])
        parts.append(
            -0.5 * algebra.commutator(om[tbl.o3_parent2], A[tbl.o3_last])
            + (1.0 / 12.0) * algebra.commutator(om[tbl.o3_first], inner3)
        )
    if len(parts) == 1:
        return parts[0]
    return concat(parts, axis=-3)


# --- structured surface -----------------------------------------------------


def initial_state(spec: ProblemSpec, drift_scale: float | None = None) -> AugmentedState:
    """The fixed initial point: R = I, all error curves zero, u = 0."""
    tbl = tables(spec)
    zeros = {idx: np.zeros((tbl.N, tbl.N), dtype=complex) for idx in spec.multi_indices}
    u0 = np.zeros(tbl.m) if tbl.smoothing else None
    if tbl.fict and drift_scale is None:
        drift_scale = 1.0
    return AugmentedState(np.eye(tbl.N, dtype=complex), zeros, u0, drift_scale)


def ideal_rhs(R, u, spec: ProblemSpec, drift_scale: float = 1.0):
    """Propagator velocity -i H^(0)(u) R."""
    tbl = tables(spec)
    u = np.asarray(u, dtype=float)
    if u.shape != (tbl.m,):
        raise ValueError(f"expected {tbl.m} control values")
    return -1.0j * (h_stack(tbl, u, drift_scale)[0] @ R)


def omega_rhs(state: AugmentedState, u, spec: ProblemSpec) -> dict:
    """Error-curve velocities keyed by multi-index."""
    tbl = tables(spec)
    u = np.asarray(u, dtype=float)
    scale = state.drift_scale if state.drift_scale is not None else 1.0
    om = np.array([state.omegas[idx] for idx in spec.multi_indices])
    A = conjugated_noise(tbl, state.R, h_stack(tbl, u, scale))
    dot = omega_stack_rhs(tbl, om, A)
    return {idx: dot[row] for row, idx in enumerate(spec.multi_indices)}


def flatten(state: AugmentedState, spec: ProblemSpec) -> np.ndarray:
    """Pack a state into the flat real layout used by the integrator."""
    tbl = tables(spec)
    om = np.array([state.omegas[idx] for idx in spec.multi_indices])
    u = state.u_state if tbl.smoothing else None
    if tbl.smoothing and u is None:
        raise ValueError("smoothing spec requires u_state")
    scale = state.drift_scale if tbl.fict else None
    if tbl.fict and scale is None:
        raise ValueError("fictitious drift mode requires drift_scale")
    return encode_state(tbl, state.R, om, u, scale)


def unflatten(y, spec: ProblemSpec) -> AugmentedState:
    """Inverse of :func:`flatten`."""
    tbl = tables(spec)
    y = np.asarray(y, dtype=float)
    if y.shape != (tbl.state_dim,):
        raise ValueError(f"expected flat state of length {tbl.state_dim}, got {y.shape}")
    R, om, u, scale = decode_state(tbl, y)
    omegas = {idx: om[row] for row, idx in enumerate(spec.multi_indices)}
    return AugmentedState(R, omegas, u, scale if tbl.fict else None)
