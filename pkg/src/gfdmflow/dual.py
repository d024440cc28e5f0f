"""Vectorized forward-mode dual numbers.

A :class:`Dual` carries an array of values together with tangents with
respect to a small, fixed set of seed directions.  Residual kernels written
against plain ``+ - * /`` arithmetic run unchanged on floats, numpy arrays,
or duals; running them on duals yields the exact local Jacobian entries of
the kernel, including through piecewise definitions (branch selection is
made on values, and the tangent of the selected branch is kept).
"""

from __future__ import annotations

import numpy as np

__all__ = ["Dual", "seed", "value", "where", "clip"]


class Dual:
    """Array of values plus tangents w.r.t. ``n_dirs`` seed directions.

    ``val`` has shape ``(m,)`` and ``tan`` has shape ``(m, n_dirs)``.
    Scalars broadcast against duals; dual-dual operations require matching
    seed layouts (enforced implicitly by shape).
    """

    __slots__ = ("val", "tan")

    # keep numpy from consuming Dual operands elementwise
    __array_ufunc__ = None

    def __init__(self, val, tan):
        self.val = np.asarray(val, dtype=float)
        self.tan = np.asarray(tan, dtype=float)

    @property
    def n_dirs(self) -> int:
        return self.tan.shape[-1]

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Dual(val={self.val!r}, tan={self.tan!r})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.tan + other.tan)
        return Dual(self.val + other, self.tan)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.tan - other.tan)
        return Dual(self.val - other, self.tan)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.tan)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                self.tan * other.val[..., None] + other.tan * self.val[..., None],
            )
        other = np.asarray(other, dtype=float)
        return Dual(self.val * other, self.tan * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            val = self.val * inv
            tan = (self.tan - other.tan * val[..., None]) * inv[..., None]
            return Dual(val, tan)
        inv = 1.0 / np.asarray(other, dtype=float)
        return Dual(self.val * inv, self.tan * inv[..., None])

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        val = np.asarray(other, dtype=float) * inv
        return Dual(val, -self.tan * (val * inv)[..., None])

    def __neg__(self):
        return Dual(-self.val, -self.tan)

    def __pow__(self, exponent):
        if not np.isscalar(exponent):
            raise TypeError("Dual exponent must be a scalar")
        val = self.val**exponent
        deriv = exponent * self.val ** (exponent - 1)
        return Dual(val, self.tan * deriv[..., None])


def seed(values, direction: int, n_dirs: int) -> Dual:
    """Dual variable seeded with unit tangent along ``direction``."""
    values = np.asarray(values, dtype=float)
    tan = np.zeros(values.shape + (n_dirs,))
    tan[..., direction] = 1.0
    return Dual(values, tan)


def value(x):
    """Value part of a dual, or the input unchanged."""
    return x.val if isinstance(x, Dual) else x


def where(cond, a, b):
    """Branch selection that keeps the tangent of the chosen branch."""
    cond = np.asarray(cond)
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return np.where(cond, a, b)
    if not isinstance(a, Dual):
        a = Dual(np.broadcast_to(np.asarray(a, float), b.val.shape), np.zeros_like(b.tan))
    if not isinstance(b, Dual):
        b = Dual(np.broadcast_to(np.asarray(b, float), a.val.shape), np.zeros_like(a.tan))
    return Dual(np.where(cond, a.val, b.val), np.where(cond[..., None], a.tan, b.tan))


def clip(x, lo, hi):
    """Clamp values to ``[lo, hi]``; tangents are zeroed where clamping binds.

    At the interval endpoints the pass-through (interior) tangent is kept.
    """
    if not isinstance(x, Dual):
        return np.clip(x, lo, hi)
    inside = (x.val >= lo) & (x.val <= hi)
    return Dual(np.clip(x.val, lo, hi), np.where(inside[..., None], x.tan, 0.0))
