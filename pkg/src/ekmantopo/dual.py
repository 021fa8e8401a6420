"""Forward-mode jets carrying value, gradient, and spatial Laplacian.

A :class:`Jet` is a truncated Taylor object for a scalar quantity depending on
the four seed variables ``(x, y, z, t)``.  It propagates

* the value,
* the first derivatives with respect to all four seeds,
* the trace of the *spatial* Hessian (the Laplacian in ``x, y, z``),

through arithmetic and elementary functions.  The Laplacian is closed under
composition without tracking the full Hessian:

    lap(f*g) = f*lap(g) + g*lap(f) + 2 grad(f).grad(g)
    lap(h(f)) = h'(f)*lap(f) + h''(f)*|grad(f)|^2

where the dot products run over the three spatial seeds only.  This is exactly
the information needed by the differential operators used elsewhere
(divergence, advection, vector Laplacian, time derivative) at a fraction of
the cost of a full second-order multivariate dual.

All payloads are numpy arrays broadcast over a trailing batch shape, so a
single Jet evaluation differentiates a whole batch of points at once.
Piecewise functions (cut-offs) zero out the derivative payload on the flat
branches with :func:`where`.
"""

from __future__ import annotations

import numpy as np

NSEED = 4  # x, y, z, t

__all__ = ["Jet", "seed_point", "seed_radial", "where", "asjet"]


class Jet:
    """Value + 4-gradient + spatial Laplacian, vectorized over a batch."""

    __slots__ = ("val", "g", "lap")
    __array_priority__ = 100.0  # beat ndarray in mixed binary ops

    def __init__(self, val, g, lap):
        self.val = np.asarray(val, dtype=float)
        self.g = np.asarray(g, dtype=float)
        self.lap = np.asarray(lap, dtype=float)

    # -- constructors ---------------------------------------------------

    @staticmethod
    def constant(val, batch_shape=None):
        val = np.asarray(val, dtype=float)
        shape = val.shape if batch_shape is None else batch_shape
        val = np.broadcast_to(val, shape).copy()
        return Jet(val, np.zeros((NSEED,) + shape), np.zeros(shape))

    @staticmethod
    def variable(val, seed_index):
        val = np.asarray(val, dtype=float)
        g = np.zeros((NSEED,) + val.shape)
        g[seed_index] = 1.0
        return Jet(val.copy(), g, np.zeros(val.shape))

    # -- views ------------------------------------------------------------

    @property
    def grad_x(self):
        """Spatial gradient, shape (3,) + batch."""
        return self.g[:3]

    @property
    def d_t(self):
        return self.g[3]

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.val + other.val, self.g + other.g, self.lap + other.lap)
        return Jet(self.val + other, self.g, self.lap)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.g, -self.lap)

    def __sub__(self, other):
        if isinstance(other, Jet):
            return Jet(self.val - other.val, self.g - other.g, self.lap - other.lap)
        return Jet(self.val - other, self.g, self.lap)

    def __rsub__(self, other):
        return Jet(other - self.val, -self.g, -self.lap)

    def __mul__(self, other):
        if isinstance(other, Jet):
            cross = np.einsum("i...,i...->...", self.g[:3], other.g[:3])
            return Jet(
                self.val * other.val,
                self.g * other.val + other.g * self.val,
                self.lap * other.val + other.lap * self.val + 2.0 * cross,
            )
        return Jet(self.val * other, self.g * other, self.lap * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other._reciprocal()
        return Jet(self.val / other, self.g / other, self.lap / other)

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def _reciprocal(self):
        inv = 1.0 / self.val
        return self._compose(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __pow__(self, n):
        if n == 2:
            return self * self
        v = self.val
        return self._compose(v**n, n * v ** (n - 1), n * (n - 1) * v ** (n - 2))

    # -- composition ------------------------------------------------------

    def _compose(self, f0, f1, f2):
        """Chain rule for a scalar function with values/derivatives f0,f1,f2."""
        g2 = np.einsum("i...,i...->...", self.g[:3], self.g[:3])
        return Jet(f0, f1 * self.g, f1 * self.lap + f2 * g2)

    def exp(self):
        e = np.exp(self.val)
        return self._compose(e, e, e)

    def sin(self):
        s, c = np.sin(self.val), np.cos(self.val)
        return self._compose(s, c, -s)

    def cos(self):
        s, c = np.sin(self.val), np.cos(self.val)
        return self._compose(c, -s, -c)

    def sqrt(self):
        r = np.sqrt(self.val)
        return self._compose(r, 0.5 / r, -0.25 / (r * self.val))

    def tanh(self):
        th = np.tanh(self.val)
        sech2 = 1.0 - th * th
        return self._compose(th, sech2, -2.0 * th * sech2)

    def __repr__(self):
        return f"Jet(val={self.val!r})"


def asjet(x, batch_shape=None):
    return x if isinstance(x, Jet) else Jet.constant(x, batch_shape)


def seed_point(x, y, z, t):
    """Seed jets for a batch of space-time points."""
    x, y, z = np.broadcast_arrays(
        np.asarray(x, float), np.asarray(y, float), np.asarray(z, float)
    )
    t = np.broadcast_to(np.asarray(t, float), x.shape)
    return (
        Jet.variable(x, 0),
        Jet.variable(y, 1),
        Jet.variable(z, 2),
        Jet.variable(t, 3),
    )


def seed_radial(rho):
    """Seed a 1-D jet in the radial variable (derivatives d/drho, d2/drho2).

    The radial coordinate is seeded through the x-slot, so ``.g[0]`` is the
    first derivative and ``.lap`` the second.
    """
    return Jet.variable(np.asarray(rho, dtype=float), 0)


def where(mask, a, b):
    """Branch select that works uniformly on ndarrays and Jets."""
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.where(mask, a, b)
    shape = np.broadcast_shapes(
        np.shape(mask),
        a.val.shape if isinstance(a, Jet) else np.shape(a),
        b.val.shape if isinstance(b, Jet) else np.shape(b),
    )
    a = asjet(a, shape) if not isinstance(a, Jet) or a.val.shape != shape else a
    b = asjet(b, shape) if not isinstance(b, Jet) or b.val.shape != shape else b
    if a.val.shape != shape:
        a = Jet(
            np.broadcast_to(a.val, shape),
            np.broadcast_to(a.g, (NSEED,) + shape),
            np.broadcast_to(a.lap, shape),
        )
    if b.val.shape != shape:
        b = Jet(
            np.broadcast_to(b.val, shape),
            np.broadcast_to(b.g, (NSEED,) + shape),
            np.broadcast_to(b.lap, shape),
        )
    return Jet(
        np.where(mask, a.val, b.val),
        np.where(mask[None], a.g, b.g),
        np.where(mask, a.lap, b.lap),
    )


# Generic math helpers dispatching between ndarray and Jet ----------------


def exp(x):
    return x.exp() if isinstance(x, Jet) else np.exp(x)


def sin(x):
    return x.sin() if isinstance(x, Jet) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Jet) else np.cos(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Jet) else np.sqrt(x)


def tanh(x):
    return x.tanh() if isinstance(x, Jet) else np.tanh(x)


def value_of(x):
    return x.val if isinstance(x, Jet) else np.asarray(x, dtype=float)
