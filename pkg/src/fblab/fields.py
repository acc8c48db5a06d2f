"""Scalar fields on the half-ball: the common currency of the functionals.

A field exposes vectorized `values` and `gradients` on (Q, N+1) point
arrays with y >= 0, plus trace accessors on (Q, N) thin-space points.
Quadrature nodes always carry y > 0, so fields whose y-derivative degenerates
at the thin space (the generic situation for a != 0) stay finite wherever a
gradient is requested.
"""

from __future__ import annotations

import numpy as np

from .polyalg import Poly
from .polynomials import AHarmonicPolynomial

__all__ = [
    "Field",
    "CallableField",
    "PolynomialField",
    "RescaledField",
    "DifferenceField",
    "PositivePartField",
    "exact_remark_solution",
]


class Field:
    """Base interface; subclasses fill in values/gradients."""

    N: int
    # True when the gradient is polynomial in (x, y); lets the functionals
    # integrate |grad u|^2 directly instead of through the y^a u_y split.
    polynomial_gradient = False

    def values(self, pts) -> np.ndarray:
        raise NotImplementedError

    def gradients(self, pts) -> np.ndarray:
        raise NotImplementedError

    def trace_values(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pts = np.concatenate([x, np.zeros((x.shape[0], 1))], axis=1)
        return self.values(pts)

    def trace_gradients(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pts = np.concatenate([x, np.zeros((x.shape[0], 1))], axis=1)
        return self.gradients(pts)[:, : self.N]

    def __sub__(self, other) -> "DifferenceField":
        return DifferenceField(self, other)


class CallableField(Field):
    def __init__(self, N, value_fn, gradient_fn, trace_value_fn=None, trace_gradient_fn=None):
        self.N = int(N)
        self._v = value_fn
        self._g = gradient_fn
        self._tv = trace_value_fn
        self._tg = trace_gradient_fn

    def values(self, pts):
        return np.asarray(self._v(np.atleast_2d(np.asarray(pts, dtype=float))), dtype=float)

    def gradients(self, pts):
        return np.asarray(self._g(np.atleast_2d(np.asarray(pts, dtype=float))), dtype=float)

    def trace_values(self, x):
        if self._tv is None:
            return super().trace_values(x)
        return np.asarray(self._tv(np.atleast_2d(np.asarray(x, dtype=float))), dtype=float)

    def trace_gradients(self, x):
        if self._tg is None:
            return super().trace_gradients(x)
        return np.asarray(self._tg(np.atleast_2d(np.asarray(x, dtype=float))), dtype=float)


class PolynomialField(Field):
    """Field backed by exact polynomial algebra (any N)."""

    polynomial_gradient = True

    def __init__(self, poly):
        if isinstance(poly, AHarmonicPolynomial):
            self.N = poly.N
            self.poly = poly.as_poly()
            self.source = poly
        elif isinstance(poly, Poly):
            self.N = poly.nvars - 1
            self.poly = poly
            self.source = None
        else:
            raise TypeError("expected Poly or AHarmonicPolynomial")
        self._grads = self.poly.gradient()

    def values(self, pts):
        return self.poly.evaluate(pts)

    def gradients(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty_like(pts)
        for ax, g in enumerate(self._grads):
            out[:, ax] = g.evaluate(pts)
        return out


class RescaledField(Field):
    """v(z) = u(x0 + r z) / s with the chain-rule gradient r/s * grad u."""

    def __init__(self, base: Field, x0, r: float, scale: float):
        self.base = base
        self.N = base.N
        self.polynomial_gradient = base.polynomial_gradient
        self.x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        self.z0 = np.concatenate([self.x0, [0.0]])
        self.r = float(r)
        self.scale = float(scale)
        if self.scale == 0.0 or not np.isfinite(self.scale):
            raise ValueError("rescaling by a vanishing or non-finite factor")

    def values(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.base.values(self.z0 + self.r * pts) / self.scale

    def gradients(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.base.gradients(self.z0 + self.r * pts) * (self.r / self.scale)

    def trace_values(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.base.trace_values(self.x0 + self.r * x) / self.scale

    def trace_gradients(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.base.trace_gradients(self.x0 + self.r * x) * (self.r / self.scale)


class DifferenceField(Field):
    def __init__(self, u: Field, v):
        self.u = u
        self.v = v if isinstance(v, Field) else PolynomialField(v)
        self.N = u.N
        self.polynomial_gradient = (u.polynomial_gradient
                                    and self.v.polynomial_gradient)

    def values(self, pts):
        return self.u.values(pts) - self.v.values(pts)

    def gradients(self, pts):
        return self.u.gradients(pts) - self.v.gradients(pts)

    def trace_values(self, x):
        return self.u.trace_values(x) - self.v.trace_values(x)

    def trace_gradients(self, x):
        return self.u.trace_gradients(x) - self.v.trace_gradients(x)


class PositivePartField(Field):
    """max(sign * u, 0); gradient restricted to the active set."""

    def __init__(self, base: Field, sign: float = 1.0):
        self.base = base
        self.N = base.N
        self.sign = float(sign)

    def values(self, pts):
        return np.maximum(self.sign * self.base.values(pts), 0.0)

    def gradients(self, pts):
        v = self.sign * self.base.values(pts)
        g = self.sign * self.base.gradients(pts)
        return g * (v > 0.0)[:, None]

    def trace_values(self, x):
        return np.maximum(self.sign * self.base.trace_values(x), 0.0)


def exact_remark_solution(N: int, a: float, direction: int = 0) -> CallableField:
    """u(x, y) = (y^(1-a) + 1 - a) * x_d, an exact solution for p = 2, lambda = 1.

    The trace is (1-a) x_d and the weighted normal derivative equals -u on the
    thin space, which is exactly the two-phase boundary law with unit
    coefficients; it also saturates the Holder regularity threshold for a != 0.
    """
    if not (-1.0 < a < 1.0):
        raise ValueError("weight exponent a must lie in (-1, 1)")
    s = 1.0 - a

    def value(pts):
        return (pts[:, N] ** s + s) * pts[:, direction]

    def gradient(pts):
        out = np.zeros_like(pts)
        out[:, direction] = pts[:, N] ** s + s
        # y > 0 on quadrature nodes; clamp the trace line to avoid 0^(negative)
        y = np.where(pts[:, N] > 0.0, pts[:, N], 1.0)
        gy = s * y ** (-a) * pts[:, direction]
        out[:, N] += np.where(pts[:, N] > 0.0, gy, 0.0 if a >= 0 else 0.0)
        return out

    def trace_value(x):
        return s * x[:, direction]

    def trace_gradient(x):
        out = np.zeros((x.shape[0], N))
        out[:, direction] = s
        return out

    return CallableField(N, value, gradient, trace_value, trace_gradient)
