"""su(N) / SU(N) primitives on plain complex ndarrays.

Conventions used throughout the package:

* Algebra elements are traceless skew-Hermitian N x N matrices.
* Group elements are unit-determinant unitary N x N matrices.
* The inner product is ``<X, Y> = (1/N) Re tr(X^dag Y)``.
* Real coordinates refer to the orthonormal basis returned by
  :func:`su_basis`; for N = 2 this is ``(-i sigma_x, -i sigma_y, -i sigma_z)``
  in that order.

All operations accept stacked inputs (leading batch axes) and only use
arithmetic that forward-mode dual numbers support, so the same code paths
serve both plain evaluation and directional differentiation.
"""

from functools import lru_cache

import numpy as np
import scipy.linalg

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

_SKEW_TOL = 1e-12
_UNITARY_TOL = 1e-10
_DET_TOL = 1e-9


def dagger(M):
    """Conjugate transpose, batched over leading axes."""
    return M.conj().swapaxes(-1, -2)


@lru_cache(maxsize=None)
def su_basis(dim: int) -> np.ndarray:
    """Orthonormal basis of su(dim) as a (dim^2 - 1, dim, dim) stack.

    Each element is ``-i * sqrt(dim/2)`` times a generalized Gell-Mann
    matrix, which makes the stack orthonormal under ``(1/N) tr(X^dag Y)``.
    Ordering: symmetric off-diagonal pairs, antisymmetric pairs, then
    diagonal generators; for dim = 2 that is (-iX, -iY, -iZ).
    """
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    gens = []
    for j in range(dim):
        for k in range(j + 1, dim):
            m = np.zeros((dim, dim), dtype=complex)
            m[j, k] = 1.0
            m[k, j] = 1.0
            gens.append(m)
    for j in range(dim):
        for k in range(j + 1, dim):
            m = np.zeros((dim, dim), dtype=complex)
            m[j, k] = -1.0j
            m[k, j] = 1.0j
            gens.append(m)
    for l in range(1, dim):
        m = np.zeros((dim, dim), dtype=complex)
        norm = np.sqrt(2.0 / (l * (l + 1)))
        for j in range(l):
            m[j, j] = norm
        m[l, l] = -l * norm
        gens.append(m)
    stack = -1.0j * np.sqrt(dim / 2.0) * np.array(gens)
    stack.setflags(write=False)
    return stack


@lru_cache(maxsize=None)
def _basis_flat(dim: int) -> np.ndarray:
    """(dim^2 - 1, dim^2) row-major flattening of :func:`su_basis`."""
    flat = su_basis(dim).reshape(dim * dim - 1, dim * dim).copy()
    flat.setflags(write=False)
    return flat


def algebra_element(M) -> np.ndarray:
    """Project a matrix onto su(N): skew-Hermitian part minus its trace.

    Projection (rather than rejection) keeps integration round-off from
    compounding; large defects should be caught by callers before this.
    """
    A = np.asarray(M, dtype=complex)
    if A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected square matrix, got shape {A.shape}")
    A = 0.5 * (A - dagger(A))
    n = A.shape[-1]
    tr = np.trace(A, axis1=-2, axis2=-1)
    return A - (tr / n)[..., None, None] * np.eye(n)


def group_element(M, tol: float = _UNITARY_TOL) -> np.ndarray:
    """Validate and return a unit-determinant unitary matrix."""
    U = np.asarray(M, dtype=complex)
    n = U.shape[-1]
    if U.shape[-2] != n:
        raise ValueError(f"expected square matrix, got shape {U.shape}")
    defect = np.linalg.norm(dagger(U) @ U - np.eye(n))
    if defect > tol:
        raise ValueError(f"matrix is not unitary: ||U^dag U - I|| = {defect:.3e}")
    det_defect = abs(np.linalg.det(U) - 1.0)
    if det_defect > _DET_TOL:
        raise ValueError(f"matrix is not special unitary: |det - 1| = {det_defect:.3e}")
    return U


def check_algebra_element(A, tol: float = _SKEW_TOL) -> None:
    """Raise if A is not traceless skew-Hermitian within tolerance."""
    A = np.asarray(A)
    scale = max(1.0, np.linalg.norm(A))
    skew = np.linalg.norm(A + dagger(A))
    if skew > tol * scale:
        raise ValueError(f"not skew-Hermitian: ||A + A^dag|| = {skew:.3e}")
    tr = abs(np.trace(A))
    if tr > tol * scale:
        raise ValueError(f"not traceless: |tr A| = {tr:.3e}")


def _check_same_dim(X, Y) -> None:
    if X.shape[-1] != Y.shape[-1] or X.shape[-2] != Y.shape[-2]:
        raise ValueError(f"dimension mismatch: {X.shape} vs {Y.shape}")


def inner(X, Y):
    """Trace inner product ``(1/N) Re tr(X^dag Y)``.

    Broadcasts over leading axes, e.g. a single element against a stack.
    """
    _check_same_dim(X, Y)
    n = X.shape[-1]
    return (X.conj() * Y).sum((-2, -1)).real / n


def commutator(X, Y):
    """Matrix commutator ``XY - YX``."""
    _check_same_dim(X, Y)
    return X @ Y - Y @ X


def conjugate(R, H):
    """Adjoint action ``R^dag H R``."""
    _check_same_dim(R, H)
    return dagger(R) @ H @ R


def expm(A) -> np.ndarray:
    """Exponential of an algebra element, landing in SU(N).

    N = 2 uses the closed Euler form; larger dimensions fall back to the
    general-purpose scaling-and-squaring exponential.
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    if A.ndim == 2 and n == 2:
        # A = -i theta (nhat . sigma) => exp(A) = cos(theta) I - i sin(theta)(nhat . sigma)
        H = 1.0j * A
        theta = np.sqrt(0.5 * (abs(H) ** 2).sum().real)
        if theta < 1e-300:
            return np.eye(2, dtype=complex)
        return np.cos(theta) * np.eye(2) - 1.0j * (np.sin(theta) / theta) * H
    return scipy.linalg.expm(A)


def vectorize(A):
    """Real coordinates of an algebra element in the :func:`su_basis` basis.

    A linear isometry: ``inner(A, B) == vectorize(A) . vectorize(B)``.
    Accepts stacks with shape (..., N, N) and returns (..., N^2 - 1).
    """
    n = A.shape[-1]
    B = _basis_flat(n)
    flat = A.reshape(A.shape[:-2] + (n * n,))
    return (flat @ B.conj().swapaxes(-1, -2)).real / n


def devectorize(v, dim: int | None = None):
    """Inverse of :func:`vectorize`: coordinates back to an su(N) matrix."""
    k = v.shape[-1]
    n = dim if dim is not None else round(np.sqrt(k + 1))
    if n * n - 1 != k:
        raise ValueError(f"coordinate length {k} is not N^2 - 1 for N = {n}")
    B = _basis_flat(n)
    flat = v @ B
    return flat.reshape(v.shape[:-1] + (n, n))
