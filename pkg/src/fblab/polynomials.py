"""Even, homogeneous polynomials annihilated by the weighted divergence operator.

A degree-k element is stored as layers c_0, ..., c_{floor(k/2)}, where

    p(x, y) = sum_j c_j(x) * y^(2j),   c_{j+1} = -Lap_x c_j / ((2j+2)(2j+1+a)).

Evenness in y and homogeneity are structural; the layer recurrence is
equivalent to div(|y|^a grad p) = 0, so membership in the space is an
algebraic property of the stored coefficients rather than a numerical one.

The module also provides exact weighted moments of monomials over the unit
upper half-sphere and half-ball, which serve as quadrature-free oracles for
the integral functionals on polynomial fields.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .polyalg import Poly, monomials

__all__ = [
    "AHarmonicPolynomial",
    "extend_from_trace",
    "basis",
    "basis_dimension",
    "hypergeometric_polynomial_2d",
    "classify_star_or_y",
    "degeneracy_dimension",
    "sphere_monomial_integral",
    "ball_monomial_integral",
    "sphere_integral_poly",
    "ball_integral_poly",
    "weighted_sphere_product",
]

STAR = "Star"
Y_DEPENDENT = "YDependent"


def _check_weight(a: float):
    if not (-1.0 < a < 1.0):
        raise ValueError("weight exponent must lie in (-1, 1), got %r" % a)


class AHarmonicPolynomial:
    """k-homogeneous, even-in-y polynomial with div(|y|^a grad p) = 0."""

    __slots__ = ("N", "k", "a", "layers")

    def __init__(self, N: int, k: int, a: float, layers: list[Poly]):
        _check_weight(a)
        self.N = int(N)
        self.k = int(k)
        self.a = float(a)
        self.layers = layers
        if len(layers) != k // 2 + 1:
            raise ValueError("expected %d layers for degree %d" % (k // 2 + 1, k))
        for j, c in enumerate(layers):
            if not c.is_zero() and c.degree() != k - 2 * j:
                raise ValueError("layer %d must be homogeneous of degree %d" % (j, k - 2 * j))

    # -- algebra -------------------------------------------------------
    @property
    def trace(self) -> Poly:
        """Restriction to {y = 0}."""
        return self.layers[0]

    def as_poly(self) -> Poly:
        """Expansion as a polynomial in (x_1, ..., x_N, y)."""
        out = Poly.zero(self.N + 1)
        for j, c in enumerate(self.layers):
            for e, v in c.terms.items():
                out.terms[e + (2 * j,)] = v
        return out

    def scaled(self, s: float) -> "AHarmonicPolynomial":
        return AHarmonicPolynomial(self.N, self.k, self.a, [c * s for c in self.layers])

    def __add__(self, other: "AHarmonicPolynomial") -> "AHarmonicPolynomial":
        if (self.N, self.k) != (other.N, other.k) or self.a != other.a:
            raise ValueError("can only add same-degree polynomials with equal weight")
        return AHarmonicPolynomial(
            self.N, self.k, self.a, [c + d for c, d in zip(self.layers, other.layers)]
        )

    # -- evaluation ------------------------------------------------------
    def evaluate(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, : self.N], pts[:, self.N]
        out = np.zeros(pts.shape[0])
        ypow = np.ones_like(y)
        for j, c in enumerate(self.layers):
            if j > 0:
                ypow = ypow * y * y
            out += c.evaluate(x) * ypow
        return out

    __call__ = evaluate

    def gradient(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, : self.N], pts[:, self.N]
        out = np.zeros_like(pts)
        ypow = np.ones_like(y)
        for j, c in enumerate(self.layers):
            if j > 0:
                ypow = ypow * y * y
            for ax in range(self.N):
                out[:, ax] += c.diff(ax).evaluate(x) * ypow
            if j > 0:
                out[:, self.N] += 2 * j * c.evaluate(x) * ypow / np.where(y != 0.0, y, 1.0) * (y != 0.0)
        return out

    def trace_values(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.layers[0].evaluate(x)

    def trace_gradients(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((x.shape[0], self.N))
        for ax in range(self.N):
            out[:, ax] = self.layers[0].diff(ax).evaluate(x)
        return out

    # -- residuals (used by the test suite as structural oracles) -------
    def harmonicity_residual(self) -> float:
        """Max layer defect of Lap_x c_j + (2j+2)(2j+1+a) c_{j+1}, relative."""
        scale = max(c.coeff_norm() for c in self.layers)
        if scale == 0.0:
            return 0.0
        worst = 0.0
        for j in range(len(self.layers)):
            lap = self.layers[j].laplacian()
            nxt = self.layers[j + 1] if j + 1 < len(self.layers) else Poly.zero(self.N)
            defect = lap + (2 * j + 2) * (2 * j + 1 + self.a) * nxt
            worst = max(worst, defect.coeff_norm())
        return worst / scale

    # -- serialization -----------------------------------------------------
    def to_json(self) -> dict:
        return {
            "N": self.N,
            "k": self.k,
            "a": self.a,
            "layers": [c.dense_coeffs(self.k - 2 * j) for j, c in enumerate(self.layers)],
        }

    @classmethod
    def from_json(cls, rec) -> "AHarmonicPolynomial":
        if isinstance(rec, str):
            rec = json.loads(rec)
        N, k, a = int(rec["N"]), int(rec["k"]), float(rec["a"])
        layers = [Poly.from_dense(N, k - 2 * j, coeffs) for j, coeffs in enumerate(rec["layers"])]
        return cls(N, k, a, layers)

    def __repr__(self):
        return "AHarmonicPolynomial(N=%d, k=%d, a=%g, trace=%r)" % (self.N, self.k, self.a, self.layers[0])


def extend_from_trace(c0: Poly, a: float) -> AHarmonicPolynomial:
    """Unique even extension of a homogeneous trace polynomial.

    The map c0 -> p is linear; each layer is obtained from the previous one
    by c_{j+1} = -Lap_x c_j / ((2j+2)(2j+1+a)).
    """
    _check_weight(a)
    k = c0.degree()
    if k < 0:
        raise ValueError("zero polynomial has no homogeneous extension")
    if any(sum(e) != k for e in c0.terms):
        raise ValueError("trace polynomial must be homogeneous")
    layers = [c0.copy()]
    for j in range(k // 2):
        nxt = layers[-1].laplacian() * (-1.0 / ((2 * j + 2) * (2 * j + 1 + a)))
        layers.append(nxt)
    return AHarmonicPolynomial(c0.nvars, k, a, layers)


def basis_dimension(N: int, k: int) -> int:
    return math.comb(N + k - 1, k)


def basis(N: int, k: int, a: float) -> list[AHarmonicPolynomial]:
    """Extensions of all degree-k monomials in x; spans the whole space."""
    if k < 0:
        raise ValueError("degree must be nonnegative")
    if k == 0:
        return [AHarmonicPolynomial(N, 0, a, [Poly.constant(N, 1.0)])]
    return [extend_from_trace(Poly.monomial(N, e), a) for e in monomials(N, k)]


def combine(elements: list[AHarmonicPolynomial], coeffs) -> AHarmonicPolynomial:
    out = elements[0].scaled(float(coeffs[0]))
    for b, c in zip(elements[1:], coeffs[1:]):
        out = out + b.scaled(float(c))
    return out


def _pochhammer(x: float, n: int) -> float:
    out = 1.0
    for i in range(n):
        out *= x + i
    return out


def hypergeometric_polynomial_2d(k: int, a: float) -> AHarmonicPolynomial:
    """Two-variable even family evaluated through its terminating series.

    For even k >= 2 the Gauss series with first parameter -k/2 terminates
    after k/2 + 1 terms, so the value is assembled exactly as a polynomial
    in (s, t); the Gamma prefactor only sets the overall scale.
    """
    _check_weight(a)
    if k < 2 or k % 2 != 0:
        raise ValueError("degree must be an even integer >= 2, got %r" % k)
    m = k // 2
    sign = -1.0 if m % 2 else 1.0
    log_pref = (
        math.lgamma(0.5 + 0.5 * a)
        - k * math.log(2.0)
        - math.lgamma(1.0 + 0.5 * k)
        - math.lgamma(0.5 + 0.5 * a + 0.5 * k)
    )
    pref = sign * math.exp(log_pref)
    b = -0.5 * k - 0.5 * a + 0.5
    layers = [Poly.zero(1) for _ in range(m + 1)]
    for n in range(m + 1):
        coeff = (
            _pochhammer(-float(m), n)
            * _pochhammer(b, n)
            / (_pochhammer(0.5, n) * math.factorial(n))
        )
        # z^n with z = -s^2/t^2 contributes (-1)^n s^(2n) t^(k-2n)
        j = (k - 2 * n) // 2
        layers[j] = layers[j] + Poly.monomial(1, (2 * n,), pref * coeff * (-1.0) ** n)
    return AHarmonicPolynomial(1, k, a, layers)


def classify_star_or_y(p: AHarmonicPolynomial, tol: float = 1e-10) -> str:
    """Star when all y-layers vanish relative to the trace, i.e. Lap_x c0 = 0."""
    scale = p.layers[0].coeff_norm()
    if scale == 0.0:
        raise ValueError("polynomial vanishes on the thin space")
    for c in p.layers[1:]:
        if c.coeff_norm() > tol * scale:
            return Y_DEPENDENT
    return STAR


def degeneracy_dimension(p: AHarmonicPolynomial, tol: float = 1e-8) -> int:
    """dim { xi : grad_x p(x, 0) . xi = 0 for all x }.

    Rows of the rank matrix are dense coefficient vectors of the trace
    partials; the rank cutoff is tol * (largest singular value).
    """
    c0 = p.layers[0]
    if c0.is_zero():
        raise ValueError("polynomial vanishes on the thin space")
    if p.k == 0:
        raise ValueError("constant polynomials have no trace gradient")
    deg = p.k - 1
    monos = monomials(p.N, deg)
    rows = np.zeros((p.N, len(monos)))
    for ax in range(p.N):
        d = c0.diff(ax)
        for i, e in enumerate(monos):
            rows[ax, i] = d.terms.get(e, 0.0)
    sv = np.linalg.svd(rows, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return p.N  # trace gradient identically zero; caller treats as error upstream
    rank = int(np.sum(sv > tol * sv[0]))
    return p.N - rank


# ----------------------------------------------------------------------
# Exact weighted moments on the unit upper half-sphere / half-ball.
# ----------------------------------------------------------------------

def sphere_monomial_integral(N: int, a: float, expo) -> float:
    """integral over the upper unit half-sphere of y^a * x^m * y^n.

    `expo` is (m_1, ..., m_N, n).  Vanishes unless every m_i is even; the
    closed form is a ratio of Gamma factors.
    """
    expo = tuple(int(e) for e in expo)
    if len(expo) != N + 1:
        raise ValueError("exponent tuple must have length N+1")
    m, n = expo[:N], expo[N]
    if any(v % 2 for v in m):
        return 0.0
    ay = a + n
    if ay <= -1.0:
        raise ValueError("y-exponent %g is not integrable on the sphere" % ay)
    log_num = math.lgamma(0.5 * (ay + 1.0)) + sum(math.lgamma(0.5 * (v + 1)) for v in m)
    log_den = math.lgamma(0.5 * (N + 1 + ay + sum(m)))
    return math.exp(log_num - log_den)


def ball_monomial_integral(N: int, a: float, expo) -> float:
    """Same monomial integrated over the unit half-ball."""
    s = sphere_monomial_integral(N, a, expo)
    return s / (N + 1 + a + sum(expo))


def sphere_integral_poly(q: Poly, N: int, a: float, r: float = 1.0) -> float:
    """Exact integral of y^a * q over the half-sphere of radius r."""
    if q.nvars != N + 1:
        raise ValueError("polynomial must live in N+1 variables")
    total = 0.0
    for e, c in q.terms.items():
        total += c * r ** (N + a + sum(e)) * sphere_monomial_integral(N, a, e)
    return total


def ball_integral_poly(q: Poly, N: int, a: float, r: float = 1.0) -> float:
    """Exact integral of y^a * q over the half-ball of radius r."""
    if q.nvars != N + 1:
        raise ValueError("polynomial must live in N+1 variables")
    total = 0.0
    for e, c in q.terms.items():
        total += c * r ** (N + 1 + a + sum(e)) * ball_monomial_integral(N, a, e)
    return total


def weighted_sphere_product(p: AHarmonicPolynomial, q: AHarmonicPolynomial, r: float = 1.0) -> float:
    """Exact weighted L2 pairing on the half-sphere of radius r."""
    if p.N != q.N or p.a != q.a:
        raise ValueError("mismatched polynomials")
    return sphere_integral_poly(p.as_poly() * q.as_poly(), p.N, p.a, r)
