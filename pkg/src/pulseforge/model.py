"""Control problem definition and validation.

A problem consists of an ideal control Hamiltonian plus ``n`` disturbance
generators, each split into a drift matrix and ``m`` control matrices, a
target gate, a robustness order ``r``, a time horizon, cost weights and a
smoothing depth.  Disturbance monomials are labelled by multi-indices
``(i_1, ..., i_k)`` with 1-based entries; one error curve is tracked per
multi-index.
"""

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import algebra

MultiIndex = tuple[int, ...]

FIXED_HORIZON = "fixed_horizon"
FICTITIOUS_DRIFT = "fictitious_drift_control"

_HERMITIAN_REJECT = 1e-8
_ZERO_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HamiltonianTerm:
    """One term H^(i): drift matrix plus m control matrices."""

    drift: np.ndarray
    controls: tuple[np.ndarray, ...]


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Full problem statement; run through :func:`validate` before use.

    ``terms[0]`` is the ideal control Hamiltonian, ``terms[1..n]`` are the
    disturbance generators.  ``weight_u``/``weight_v`` are the quadratic
    cost weights on envelope values and (with smoothing) their slopes.
    """

    dimension: int
    terms: tuple[HamiltonianTerm, ...]
    target: np.ndarray
    disturbances: int
    controls: int
    order: int
    horizon: float
    weight_u: float = 0.0
    weight_v: float = 1.0
    smoothing: int = 1
    drift_mode: str = FIXED_HORIZON
    multi_indices: tuple[MultiIndex, ...] = ()
    validated: bool = False

    @property
    def n(self) -> int:
        return self.disturbances

    @property
    def m(self) -> int:
        return self.controls

    @property
    def p(self) -> int:
        return len(self.multi_indices)

    @property
    def coord_dim(self) -> int:
        return self.dimension * self.dimension - 1


def enumerate_multi_indices(n: int, r: int) -> list[MultiIndex]:
    """All disturbance multi-indices, ascending order k then lexicographic.

    Returns ``n + n^2 + ... + n^r`` tuples; permutations are distinct
    (the error-curve recursion is not symmetrized).
    """
    if n < 1:
        raise ValueError("need at least one disturbance")
    if not 1 <= r <= 3:
        raise ValueError(f"robustness order {r} unsupported (expected 1..3)")
    out: list[MultiIndex] = []
    for k in range(1, r + 1):
        level = [()]
        for _ in range(k):
            level = [idx + (i,) for idx in level for i in range(1, n + 1)]
        out.extend(level)
    return out


def hamiltonian_value(term: HamiltonianTerm, u) -> np.ndarray:
    """Evaluate ``H_0 + sum_j u_j H_j`` at control values u."""
    u = np.asarray(u, dtype=float)
    if u.shape != (len(term.controls),):
        raise ValueError(f"expected {len(term.controls)} control values, got shape {u.shape}")
    H = term.drift.astype(complex).copy()
    for uj, Hj in zip(u, term.controls):
        H = H + uj * Hj
    return H


def _project_hermitian(M, where: str) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    defect = np.linalg.norm(M - algebra.dagger(M))
    if defect > _HERMITIAN_REJECT * max(1.0, np.linalg.norm(M)):
        raise ValueError(f"{where}: matrix is not Hermitian (defect {defect:.3e})")
    H = 0.5 * (M + algebra.dagger(M))
    n = H.shape[-1]
    return H - (np.trace(H) / n) * np.eye(n)


def validate(spec: ProblemSpec) -> ProblemSpec:
    """Normalize and check a problem; returns a new validated spec.

    Hamiltonian matrices are projected to traceless Hermitian, the target
    is projected into SU(N), and the order/noise-structure compatibility
    rules are enforced.  Idempotent.
    """
    N = spec.dimension
    if N < 2:
        raise ValueError("dimension must be at least 2")
    n, m, r = spec.disturbances, spec.controls, spec.order
    if n < 1:
        raise ValueError("need at least one disturbance generator")
    if m < 1:
        raise ValueError("need at least one control")
    if len(spec.terms) != n + 1:
        raise ValueError(f"expected {n + 1} Hamiltonian terms, got {len(spec.terms)}")
    if spec.smoothing not in (0, 1):
        raise ValueError("smoothing depth must be 0 or 1")
    if spec.drift_mode not in (FIXED_HORIZON, FICTITIOUS_DRIFT):
        raise ValueError(f"unknown drift_mode {spec.drift_mode!r}")
    if spec.horizon <= 0:
        raise ValueError("horizon must be positive")
    if spec.weight_u < 0:
        raise ValueError("weight_u must be nonnegative")
    if spec.weight_v <= 0:
        raise ValueError("weight_v must be positive")

    terms = []
    for i, term in enumerate(spec.terms):
        if len(term.controls) != m:
            raise ValueError(f"terms[{i}]: expected {m} control matrices")
        drift = _project_hermitian(term.drift, f"terms[{i}].drift")
        if drift.shape != (N, N):
            raise ValueError(f"terms[{i}].drift: expected shape ({N}, {N})")
        ctrls = []
        for j, C in enumerate(term.controls):
            C = _project_hermitian(C, f"terms[{i}].controls[{j}]")
            if C.shape != (N, N):
                raise ValueError(f"terms[{i}].controls[{j}]: expected shape ({N}, {N})")
            ctrls.append(C)
        terms.append(HamiltonianTerm(drift, tuple(ctrls)))

    if r >= 2:
        if n != 1:
            raise ValueError("order >= 2 unsupported with more than one disturbance")
        for i in range(1, n + 1):
            if any(np.linalg.norm(C) > _ZERO_TOL for C in terms[i].controls):
                raise ValueError(
                    "order >= 2 unsupported with control-dependent noise generators"
                )

    target = np.asarray(spec.target, dtype=complex)
    if target.shape != (N, N):
        raise ValueError(f"target: expected shape ({N}, {N})")
    defect = np.linalg.norm(algebra.dagger(target) @ target - np.eye(N))
    if defect > _HERMITIAN_REJECT:
        raise ValueError(f"target is not unitary (defect {defect:.3e})")
    det = np.linalg.det(target)
    target = algebra.group_element(target / det ** (1.0 / N))

    horizon = 1.0 if spec.drift_mode == FICTITIOUS_DRIFT else float(spec.horizon)
    indices = tuple(enumerate_multi_indices(n, r))
    return replace(
        spec,
        terms=tuple(terms),
        target=target,
        horizon=horizon,
        multi_indices=indices,
        validated=True,
    )


# --- JSON problem files ---------------------------------------------------
# Matrices are nested arrays of [re, im] pairs, row-major.


def matrix_to_pairs(M) -> list:
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def pairs_to_matrix(data, where: str = "matrix") -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{where}: malformed matrix entries") from exc
    if arr.ndim != 3 or arr.shape[-1] != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(
            f"{where}: expected a square matrix of [re, im] pairs, got shape {arr.shape}"
        )
    return arr[..., 0] + 1.0j * arr[..., 1]


def problem_from_dict(data: dict) -> ProblemSpec:
    """Build a ProblemSpec from the JSON problem-file structure."""
    try:
        dimension = int(data["dimension"])
        n = int(data["disturbances"])
        m = int(data["controls"])
        r = int(data["order"])
        horizon = float(data.get("horizon", 1.0))
        raw_terms = data["terms"]
        target = pairs_to_matrix(data["target"], "target")
    except KeyError as exc:
        raise ValueError(f"problem file missing field {exc.args[0]!r}") from exc
    if not isinstance(raw_terms, list):
        raise ValueError("terms: expected an array")
    terms = []
    for i, entry in enumerate(raw_terms):
        drift = pairs_to_matrix(entry["drift"], f"terms[{i}].drift")
        ctrls = tuple(
            pairs_to_matrix(c, f"terms[{i}].controls[{j}]")
            for j, c in enumerate(entry.get("controls", []))
        )
        terms.append(HamiltonianTerm(drift, ctrls))
    weights = data.get("weights", {})
    return ProblemSpec(
        dimension=dimension,
        terms=tuple(terms),
        target=target,
        disturbances=n,
        controls=m,
        order=r,
        horizon=horizon,
        weight_u=float(weights.get("R_u", 0.0)),
        weight_v=float(weights.get("R_v", 1.0)),
        smoothing=int(data.get("smoothing", 1)),
        drift_mode=data.get("drift_mode", FIXED_HORIZON),
    )


def problem_to_dict(spec: ProblemSpec) -> dict:
    return {
        "dimension": spec.dimension,
        "terms": [
            {
                "drift": matrix_to_pairs(t.drift),
                "controls": [matrix_to_pairs(c) for c in t.controls],
            }
            for t in spec.terms
        ],
        "target": matrix_to_pairs(spec.target),
        "disturbances": spec.disturbances,
        "controls": spec.controls,
        "order": spec.order,
        "horizon": spec.horizon,
        "weights": {"R_u": spec.weight_u, "R_v": spec.weight_v},
        "smoothing": spec.smoothing,
        "drift_mode": spec.drift_mode,
    }


def load_problem(path) -> ProblemSpec:
    """Read and validate a JSON problem file."""
    text = Path(path).read_text()
    data = json.loads(text)
    return validate(problem_from_dict(data))
