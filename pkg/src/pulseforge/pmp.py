"""Maximum-principle machinery: control Hamiltonian, stationary controls,
costate dynamics and the combined Hamiltonian vector field.

The costate mirrors the augmented state through the trace inner product
(one su(N) element per state block, plus one scalar per smoothed control).
The abnormal multiplier is fixed to -1 throughout, so the running cost
enters the control Hamiltonian with a minus sign and stationary controls
are the closed-form maximizers of a concave quadratic.

Two costate flows are implemented:

* case A - first-order robustness, any number of disturbances, arbitrary
  control dependence of the noise generators;
* case B - a single control-independent noise generator suppressed to
  order <= 3.

Spec validation guarantees every problem lands in one of these.
"""

from dataclasses import dataclass

import numpy as np

from . import algebra, dynamics
from .dual import concat
from .model import ProblemSpec


@dataclass(eq=False)
class Costate:
    """Adjoint variables paired with :class:`dynamics.AugmentedState`."""

    mu_R: np.ndarray
    mus: dict
    mu_u: np.ndarray | None = None


def full_dim(spec: ProblemSpec) -> int:
    tbl = dynamics.tables(spec)
    return tbl.state_dim + tbl.costate_dim


def _pair_tables(tbl):
    """Gather stacks for the nonzero noise control matrices, cached on tbl."""
    if not hasattr(tbl, "pair_H"):
        if tbl.noise_ctrl:
            tbl.pair_H = np.array([tbl.Hc[i, j] for i, j in tbl.noise_ctrl])
            tbl.pair_mu_row = np.array(
                [i - 1 for i, _ in tbl.noise_ctrl], dtype=int
            )  # order-1 curve rows come first, in disturbance order
            scatter = np.zeros((len(tbl.noise_ctrl), tbl.m))
            for row, (_, j) in enumerate(tbl.noise_ctrl):
                scatter[row, j] = 1.0
            tbl.pair_scatter = scatter
        else:
            tbl.pair_H = None
    return tbl


def decode_costate(tbl, c):
    """Flat costate block -> (mu_R, mu stack, mu_u)."""
    K, p = tbl.K, tbl.p
    mu_R = algebra.devectorize(c[0:K], tbl.N)
    mus = algebra.devectorize(c[K : K + p * K].reshape((p, K)), tbl.N)
    mu_u = c[K + p * K : K + p * K + tbl.m] if tbl.smoothing else None
    return mu_R, mus, mu_u


def encode_costate(tbl, mu_R, mus, mu_u):
    parts = [
        algebra.vectorize(mu_R),
        algebra.vectorize(mus).reshape((tbl.p * tbl.K,)),
    ]
    if tbl.smoothing:
        parts.append(mu_u)
    return concat(parts)


def control_gradient(tbl, R, mu_R, mus):
    """d/du of the costate-velocity pairing: one entry per control.

    Equals ``<mu_R, -i H_j^(0)> + sum_i <mu_1^(i), -i R^dag H_j^(i) R>``
    over the noise generators whose control matrices are nonzero (the
    error-curve velocities of order >= 2 are control-independent).
    """
    _pair_tables(tbl)
    grad = algebra.inner(mu_R, -1.0j * tbl.Hc[0])
    if tbl.pair_H is not None:
        C = -1.0j * (algebra.dagger(R) @ tbl.pair_H @ R)
        vals = algebra.inner(mus[tbl.pair_mu_row], C)
        grad = grad + vals @ tbl.pair_scatter
    return grad


def _split(tbl, y):
    xs = y[0 : tbl.state_dim]
    cs = y[tbl.state_dim : tbl.state_dim + tbl.costate_dim]
    return xs, cs


def _physical_control(tbl, spec, u_state, grad):
    if tbl.smoothing:
        return u_state
    if spec.weight_u <= 0.0:
        raise ValueError("unbounded control: weight_u must be positive without smoothing")
    return grad / spec.weight_u


def _costate_flow(tbl, spec, R, om, mu_R, mus, Hu, A):
    """Velocities of (mu_R, mu stack) for the active case."""
    comm = algebra.commutator
    mu_R_dot = comm(-1.0j * Hu[0], mu_R)
    if spec.order == 1:
        # case A: mu_R picks up every noise generator conjugated around the
        # transported first-order costates; the curve costates freeze
        M = R @ mus @ algebra.dagger(R)
        mu_R_dot = mu_R_dot + comm(-1.0j * Hu[1:], M).sum(-3)
        mus_dot = np.zeros((tbl.p, tbl.N, tbl.N), dtype=complex)
        return mu_R_dot, mus_dot
    # case B: single disturbance, noise generator D independent of u
    r = spec.order
    B = A[0]
    mu1, om1 = mus[0], om[0]
    mu2 = mus[1]
    Kmat = mu1 - 0.5 * comm(mu2, om1)
    mu1_dot = 0.5 * comm(B, mu2)
    if r == 3:
        mu3, om2 = mus[2], om[1]
        Kmat = Kmat - 0.5 * comm(mu3, om2) + (1.0 / 12.0) * comm(comm(mu3, om1), om1)
        mu1_dot = (
            mu1_dot
            - (1.0 / 12.0) * comm(comm(om1, B), mu3)
            - (1.0 / 12.0) * comm(B, comm(om1, mu3))
        )
        mu2_dot = 0.5 * comm(B, mu3)
        zero = np.zeros((1, tbl.N, tbl.N), dtype=complex)
        mus_dot = concat(
            [mu1_dot.reshape((1, tbl.N, tbl.N)), mu2_dot.reshape((1, tbl.N, tbl.N)), zero],
            axis=-3,
        )
    else:
        zero = np.zeros((1, tbl.N, tbl.N), dtype=complex)
        mus_dot = concat([mu1_dot.reshape((1, tbl.N, tbl.N)), zero], axis=-3)
    mu_R_dot = mu_R_dot + comm(-1.0j * Hu[1], R @ Kmat @ algebra.dagger(R))
    return mu_R_dot, mus_dot


def full_vector_field(y, spec: ProblemSpec):
    """Right-trivialized Hamiltonian vector field on flat state + costate.

    Autonomous: the stationary control is computed from (x, mu) pointwise
    and substituted into both the state and costate velocities.
    """
    tbl = dynamics.tables(spec)
    xs, cs = _split(tbl, y)
    R, om, u_state, scale = dynamics.decode_state(tbl, xs)
    mu_R, mus, mu_u = decode_costate(tbl, cs)

    grad = control_gradient(tbl, R, mu_R, mus)
    u_phys = _physical_control(tbl, spec, u_state, grad)
    Hu = dynamics.h_stack(tbl, u_phys, scale)
    A = dynamics.conjugated_noise(tbl, R, Hu)

    R_dot = -1.0j * (Hu[0] @ R)
    om_dot = dynamics.omega_stack_rhs(tbl, om, A)
    v = mu_u / spec.weight_v if tbl.smoothing else None
    x_dot = dynamics.encode_state(tbl, R_dot, om_dot, v, np.zeros(1) if tbl.fict else None)

    mu_R_dot, mus_dot = _costate_flow(tbl, spec, R, om, mu_R, mus, Hu, A)
    mu_u_dot = -grad + spec.weight_u * u_state if tbl.smoothing else None
    c_dot = encode_costate(tbl, mu_R_dot, mus_dot, mu_u_dot)
    return concat([x_dot, c_dot])


# --- structured surface -----------------------------------------------------


def _stacks(spec, x: dynamics.AugmentedState, mu: Costate):
    tbl = dynamics.tables(spec)
    om = np.array([x.omegas[idx] for idx in spec.multi_indices])
    mus = np.array([mu.mus[idx] for idx in spec.multi_indices])
    scale = x.drift_scale if x.drift_scale is not None else 1.0
    return tbl, om, mus, scale


def optimal_control(x: dynamics.AugmentedState, mu: Costate, spec: ProblemSpec):
    """Closed-form maximizer of the control Hamiltonian.

    Without smoothing this is the physical control; with smoothing the
    physical envelope is a state and the returned values are its slopes.
    """
    tbl, om, mus, scale = _stacks(spec, x, mu)
    if tbl.smoothing:
        if spec.weight_v <= 0.0:
            raise ValueError("unbounded control: weight_v must be positive with smoothing")
        return np.asarray(mu.mu_u, dtype=float) / spec.weight_v
    if spec.weight_u <= 0.0:
        raise ValueError("unbounded control: weight_u must be positive without smoothing")
    return control_gradient(tbl, x.R, mu.mu_R, mus) / spec.weight_u


def control_hamiltonian(x: dynamics.AugmentedState, mu: Costate, u, spec: ProblemSpec) -> float:
    """Value of the PMP Hamiltonian at decision values ``u``.

    ``u`` is the decision variable: the physical control without
    smoothing, the envelope slopes ``v`` with smoothing (the physical
    envelope then comes from the state).
    """
    tbl, om, mus, scale = _stacks(spec, x, mu)
    u = np.asarray(u, dtype=float)
    if tbl.smoothing:
        v, u_phys = u, np.asarray(x.u_state, dtype=float)
    else:
        v, u_phys = None, u
    Hu = dynamics.h_stack(tbl, u_phys, scale)
    A = dynamics.conjugated_noise(tbl, x.R, Hu)
    om_dot = dynamics.omega_stack_rhs(tbl, om, A)
    value = algebra.inner(mu.mu_R, -1.0j * (Hu[0])) + algebra.inner(mus, om_dot).sum(-1)
    cost = 0.5 * spec.weight_u * (u_phys ** 2).sum(-1)
    if tbl.smoothing:
        value = value + (np.asarray(mu.mu_u, dtype=float) * v).sum(-1)
        cost = cost + 0.5 * spec.weight_v * (v ** 2).sum(-1)
    return float(value - cost)


def costate_rhs(x: dynamics.AugmentedState, mu: Costate, u, spec: ProblemSpec) -> Costate:
    """Costate velocities at physical control values ``u``.

    With smoothing the physical control is read from ``x.u_state`` (the
    passed values are ignored there, matching the state-equation layout).
    """
    tbl, om, mus, scale = _stacks(spec, x, mu)
    u_phys = np.asarray(x.u_state if tbl.smoothing else u, dtype=float)
    Hu = dynamics.h_stack(tbl, u_phys, scale)
    A = dynamics.conjugated_noise(tbl, x.R, Hu)
    mu_R_dot, mus_dot = _costate_flow(tbl, spec, x.R, om, mu.mu_R, mus, Hu, A)
    mu_u_dot = None
    if tbl.smoothing:
        grad = control_gradient(tbl, x.R, mu.mu_R, mus)
        mu_u_dot = -grad + spec.weight_u * u_phys
    mus_dict = {idx: mus_dot[row] for row, idx in enumerate(spec.multi_indices)}
    return Costate(mu_R_dot, mus_dict, mu_u_dot)


def flatten_costate(mu: Costate, spec: ProblemSpec) -> np.ndarray:
    tbl = dynamics.tables(spec)
    mus = np.array([mu.mus[idx] for idx in spec.multi_indices])
    mu_u = np.asarray(mu.mu_u, dtype=float) if tbl.smoothing else None
    return encode_costate(tbl, mu.mu_R, mus, mu_u)


def unflatten_costate(c, spec: ProblemSpec) -> Costate:
    tbl = dynamics.tables(spec)
    c = np.asarray(c, dtype=float)
    if c.shape != (tbl.costate_dim,):
        raise ValueError(f"expected flat costate of length {tbl.costate_dim}")
    mu_R, mus, mu_u = decode_costate(tbl, c)
    mus_dict = {idx: mus[row] for row, idx in enumerate(spec.multi_indices)}
    return Costate(mu_R, mus_dict, mu_u)


def decode_full(y, spec: ProblemSpec):
    """Flat combined vector -> (AugmentedState, Costate)."""
    tbl = dynamics.tables(spec)
    y = np.asarray(y, dtype=float)
    xs, cs = _split(tbl, y)
    return dynamics.unflatten(xs, spec), unflatten_costate(cs, spec)


def hamiltonian_on_flat(y, spec: ProblemSpec) -> float:
    """Control Hamiltonian evaluated at the stationary control of ``y``."""
    x, mu = decode_full(y, spec)
    return control_hamiltonian(x, mu, optimal_control(x, mu, spec), spec)
