"""Sparse multivariate polynomial arithmetic over float coefficients.

Polynomials are stored as {exponent tuple: coefficient} maps.  This is the
small algebra layer underneath the homogeneous-extension machinery and the
symbolic identity checks; term counts stay tiny (tens), so no attempt is
made at asymptotic cleverness.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

__all__ = ["Poly", "monomials", "monomial_index"]


def monomials(nvars: int, degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples of total degree `degree`, in reverse-lex order.

    The order is deterministic and used for dense serialization of
    homogeneous coefficient layers.
    """
    if degree < 0:
        return []
    out = []
    for combo in itertools.combinations_with_replacement(range(nvars), degree):
        e = [0] * nvars
        for v in combo:
            e[v] += 1
        out.append(tuple(e))
    # combinations_with_replacement yields x1^d first for nvars>=1
    return out


def monomial_index(nvars: int, degree: int) -> dict[tuple[int, ...], int]:
    return {e: i for i, e in enumerate(monomials(nvars, degree))}


class Poly:
    """Polynomial in `nvars` variables."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms=None):
        self.nvars = int(nvars)
        self.terms: dict[tuple[int, ...], float] = {}
        if terms:
            for e, c in terms.items():
                c = float(c)
                if c != 0.0:
                    self.terms[tuple(int(v) for v in e)] = c

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, c: float) -> "Poly":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def monomial(cls, nvars: int, expo, c: float = 1.0) -> "Poly":
        return cls(nvars, {tuple(expo): c})

    @classmethod
    def variable(cls, nvars: int, axis: int) -> "Poly":
        e = [0] * nvars
        e[axis] = 1
        return cls(nvars, {tuple(e): 1.0})

    def copy(self) -> "Poly":
        p = Poly(self.nvars)
        p.terms = dict(self.terms)
        return p

    # -- ring operations ----------------------------------------------
    def _check(self, other: "Poly"):
        if self.nvars != other.nvars:
            raise ValueError("mixing polynomials in different variable counts")

    def __add__(self, other):
        if np.isscalar(other):
            other = Poly.constant(self.nvars, other)
        self._check(other)
        out = self.copy()
        for e, c in other.terms.items():
            v = out.terms.get(e, 0.0) + c
            if v == 0.0:
                out.terms.pop(e, None)
            else:
                out.terms[e] = v
        return out

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        if np.isscalar(other):
            other = Poly.constant(self.nvars, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            if other == 0.0:
                return Poly.zero(self.nvars)
            return Poly(self.nvars, {e: c * other for e, c in self.terms.items()})
        self._check(other)
        out = Poly.zero(self.nvars)
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                v = out.terms.get(e, 0.0) + c1 * c2
                if v == 0.0:
                    out.terms.pop(e, None)
                else:
                    out.terms[e] = v
        return out

    __rmul__ = __mul__

    # -- calculus -----------------------------------------------------
    def diff(self, axis: int) -> "Poly":
        out = Poly.zero(self.nvars)
        for e, c in self.terms.items():
            k = e[axis]
            if k == 0:
                continue
            e2 = list(e)
            e2[axis] = k - 1
            out.terms[tuple(e2)] = out.terms.get(tuple(e2), 0.0) + c * k
        out.terms = {e: c for e, c in out.terms.items() if c != 0.0}
        return out

    def laplacian(self, axes=None) -> "Poly":
        axes = range(self.nvars) if axes is None else axes
        out = Poly.zero(self.nvars)
        for ax in axes:
            out = out + self.diff(ax).diff(ax)
        return out

    def divide_by_var(self, axis: int) -> "Poly":
        """Exact division by a variable; raises if any term lacks it."""
        out = Poly.zero(self.nvars)
        for e, c in self.terms.items():
            if e[axis] == 0:
                raise ValueError("polynomial is not divisible by variable %d" % axis)
            e2 = list(e)
            e2[axis] -= 1
            out.terms[tuple(e2)] = c
        return out

    def shift(self, x0) -> "Poly":
        """Recentered polynomial q(z) = p(z + x0)."""
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (self.nvars,):
            raise ValueError("shift vector has wrong length")
        out = Poly.zero(self.nvars)
        for e, c in self.terms.items():
            term = Poly.constant(self.nvars, c)
            for ax, k in enumerate(e):
                if k == 0:
                    continue
                lin = Poly(self.nvars, {tuple(0 if i != ax else 1 for i in range(self.nvars)): 1.0})
                lin = lin + x0[ax]
                for _ in range(k):
                    term = term * lin
            out = out + term
        return out

    # -- queries --------------------------------------------------------
    def degree(self) -> int:
        if not self.terms:
            return -1
        return max(sum(e) for e in self.terms)

    def homogeneous_part(self, d: int) -> "Poly":
        return Poly(self.nvars, {e: c for e, c in self.terms.items() if sum(e) == d})

    def lowest_degree(self) -> int:
        if not self.terms:
            return -1
        return min(sum(e) for e in self.terms)

    def coeff_norm(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.coeff_norm() <= tol

    def gradient(self) -> list["Poly"]:
        return [self.diff(ax) for ax in range(self.nvars)]

    def evaluate(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.shape[1] != self.nvars:
            raise ValueError("points have %d coordinates, expected %d" % (pts.shape[1], self.nvars))
        out = np.zeros(pts.shape[0])
        for e, c in self.terms.items():
            mono = np.full(pts.shape[0], c)
            for ax, k in enumerate(e):
                if k:
                    mono = mono * pts[:, ax] ** k
            out += mono
        return out

    def __call__(self, pts):
        return self.evaluate(pts)

    def __repr__(self):
        if not self.terms:
            return "Poly(0)"
        bits = []
        for e in sorted(self.terms, key=lambda t: (sum(t), t), reverse=True):
            c = self.terms[e]
            mono = "*".join("z%d^%d" % (i, k) for i, k in enumerate(e) if k)
            bits.append("%+.6g%s" % (c, "*" + mono if mono else ""))
        return "Poly(" + " ".join(bits) + ")"

    # -- dense layer (de)serialization ----------------------------------
    def dense_coeffs(self, degree: int) -> list[float]:
        """Coefficients against `monomials(nvars, degree)`; poly must be homogeneous."""
        idx = monomial_index(self.nvars, degree)
        out = [0.0] * len(idx)
        for e, c in self.terms.items():
            if sum(e) != degree:
                raise ValueError("polynomial is not homogeneous of degree %d" % degree)
            out[idx[e]] = c
        return out

    @classmethod
    def from_dense(cls, nvars: int, degree: int, coeffs) -> "Poly":
        monos = monomials(nvars, degree)
        if len(coeffs) != len(monos):
            raise ValueError("coefficient array has wrong length")
        return cls(nvars, dict(zip(monos, coeffs)))


def random_poly(nvars: int, degree: int, rng, scale: float = 1.0) -> Poly:
    """Dense random polynomial with N(0, scale) coefficients (all degrees <= degree)."""
    terms = {}
    for d in range(degree + 1):
        for e in monomials(nvars, d):
            terms[e] = rng.normal(0.0, scale)
    return Poly(nvars, terms)
