"""Forward-mode dual numbers over numpy arrays.

A :class:`Dual` carries a value array and a tangent array ``eps`` with one
extra *leading* axis enumerating independent seed directions, so a single
forward pass through the shooting integrator gives directional derivatives
along every seed at once.  Only the operations the Hamiltonian vector field
actually uses are implemented: arithmetic, matmul, slicing, reshape,
conjugation, axis swaps and trailing-axis sums.  Code written against this
surface (negative axes everywhere) runs unchanged on plain ndarrays.
"""

import numpy as np


def _lift(eps: np.ndarray, out_ndim: int) -> np.ndarray:
    """Insert singleton axes after the seed axis so eps broadcasts to out."""
    have = eps.ndim - 1
    if have >= out_ndim:
        return eps
    shape = eps.shape[:1] + (1,) * (out_ndim - have) + eps.shape[1:]
    return eps.reshape(shape)


class Dual:
    __slots__ = ("val", "eps")

    # keep numpy from consuming us in mixed expressions; operators then
    # fall back to our reflected methods
    __array_ufunc__ = None

    def __init__(self, val, eps):
        self.val = np.asarray(val)
        self.eps = np.asarray(eps)

    @classmethod
    def seed(cls, val, positions=None):
        """Dual with identity seeds, one per entry of ``positions``.

        ``positions`` indexes into a flat ``val``; None seeds every entry.
        """
        val = np.asarray(val, dtype=float)
        if val.ndim != 1:
            raise ValueError("seed expects a flat array")
        if positions is None:
            positions = np.arange(val.size)
        eps = np.zeros((len(positions), val.size))
        eps[np.arange(len(positions)), positions] = 1.0
        return cls(val, eps)

    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    @property
    def nseeds(self):
        return self.eps.shape[0]

    @property
    def real(self):
        return Dual(self.val.real, self.eps.real)

    @property
    def imag(self):
        return Dual(self.val.imag, self.eps.imag)

    def conj(self):
        return Dual(self.val.conj(), self.eps.conj())

    def swapaxes(self, a, b):
        if a >= 0 or b >= 0:
            raise ValueError("use negative axes with Dual")
        return Dual(self.val.swapaxes(a, b), self.eps.swapaxes(a, b))

    def reshape(self, shape):
        shape = tuple(shape)
        return Dual(self.val.reshape(shape), self.eps.reshape(self.eps.shape[:1] + shape))

    def sum(self, axis):
        axes = axis if isinstance(axis, tuple) else (axis,)
        if any(a >= 0 for a in axes):
            raise ValueError("use negative axes with Dual")
        return Dual(self.val.sum(axis), self.eps.sum(axis))

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual(self.val[idx], self.eps[(slice(None),) + idx])

    def __neg__(self):
        return Dual(-self.val, -self.eps)

    def __add__(self, other):
        if isinstance(other, Dual):
            val = self.val + other.val
            return Dual(val, _lift(self.eps, val.ndim) + _lift(other.eps, val.ndim))
        val = self.val + other
        return Dual(val, np.broadcast_to(_lift(self.eps, val.ndim), (self.nseeds,) + val.shape))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            val = self.val * other.val
            return Dual(
                val,
                _lift(self.eps, val.ndim) * other.val + self.val * _lift(other.eps, val.ndim),
            )
        val = self.val * other
        return Dual(val, _lift(self.eps, val.ndim) * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * other ** -1.0
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return other * self ** -1.0

    def __pow__(self, p: float):
        # real powers of real-valued duals (used for norms and reciprocals)
        val = self.val ** p
        return Dual(val, _lift(self.eps, np.ndim(val)) * (p * self.val ** (p - 1.0)))

    def __matmul__(self, other):
        # lift keeps the seed axis outermost so data batch axes of the two
        # operands stay aligned under matmul broadcasting
        if isinstance(other, Dual):
            val = self.val @ other.val
            return Dual(
                val,
                _lift(self.eps, val.ndim) @ other.val
                + self.val @ _lift(other.eps, val.ndim),
            )
        val = self.val @ other
        return Dual(val, _lift(self.eps, val.ndim) @ other)

    def __rmatmul__(self, other):
        val = other @ self.val
        return Dual(val, other @ _lift(self.eps, val.ndim))

    def __repr__(self):
        return f"Dual(shape={self.val.shape}, nseeds={self.eps.shape[0]})"


def concat(parts, axis=-1):
    """Concatenate a mix of Dual and plain arrays along a trailing axis."""
    if not any(isinstance(p, Dual) for p in parts):
        return np.concatenate(parts, axis=axis)
    if axis >= 0:
        raise ValueError("use negative axes with Dual")
    nseeds = next(p.nseeds for p in parts if isinstance(p, Dual))
    vals, epss = [], []
    for p in parts:
        if isinstance(p, Dual):
            vals.append(p.val)
            epss.append(np.broadcast_to(_lift(p.eps, p.val.ndim), (nseeds,) + p.val.shape))
        else:
            p = np.asarray(p)
            vals.append(p)
            epss.append(np.zeros((nseeds,) + p.shape, dtype=p.dtype))
    return Dual(np.concatenate(vals, axis=axis), np.concatenate(epss, axis=axis))


def value(x):
    """Value part of a Dual, or the array itself."""
    return x.val if isinstance(x, Dual) else x
