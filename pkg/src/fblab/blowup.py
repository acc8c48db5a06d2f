"""Rescaling analysis at thin-space points: order, limit polynomial, checks.

At a nodal point x0 the field u(x0 + r z) / r^k converges to a unique
even, k-homogeneous, weight-harmonic polynomial.  The engine estimates k
from the frequency limit, projects the rescaled field onto the degree-k
polynomial space in the weighted H^1 inner product of the unit half-ball,
extrapolates the coefficients to r = 0 on the r^(1-a) correction scale,
and runs the nondegeneracy and Monneau-tail diagnostics that certify the
fit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .domain import BallRules
from .fields import Field, RescaledField
from .functionals import (
    DegenerateHError,
    _as_field,
    compute_DHG,
    default_rules,
    fit_power_offset,
    frequency_profile,
    monneau_profile,
)
from .polynomials import AHarmonicPolynomial, ball_integral_poly, basis, combine
from .polyalg import Poly
from .solver import ProblemSpec

__all__ = [
    "rescale",
    "OrderEstimate",
    "estimate_order",
    "BlowupFit",
    "fit_blowup",
    "NondegeneracyReport",
    "nondegeneracy_check",
    "BlowupReport",
    "blowup_report",
    "ContinuityReport",
    "blowup_continuity_probe",
]


def rescale(u, x0, r: float, mode: str = "order", k: int | None = None,
            spec: ProblemSpec | None = None, rules: BallRules | None = None) -> RescaledField:
    """u(x0 + r z) normalized by r^k ("order") or sqrt(H(u, r)) ("sqrt_h")."""
    u = _as_field(u)
    if mode == "order":
        if k is None:
            raise ValueError("mode 'order' requires the homogeneity degree k")
        return RescaledField(u, x0, r, r ** k)
    if mode == "sqrt_h":
        if spec is None:
            raise ValueError("mode 'sqrt_h' requires the problem spec")
        _, H, _ = compute_DHG(u, spec, x0, r, rules)
        if H <= 0.0:
            raise DegenerateHError("H(%g) = %g at %s" % (r, H, x0))
        return RescaledField(u, x0, r, np.sqrt(H))
    raise ValueError("mode must be 'order' or 'sqrt_h'")


@dataclass
class OrderEstimate:
    k: int
    limit: float
    confidence: float
    flagged: bool
    profile: object

    INTEGER_REJECT = 0.25


def estimate_order(u, spec: ProblemSpec, x0, radii, rules=None) -> OrderEstimate:
    """Integer vanishing order from the extrapolated frequency limit.

    Estimates farther than 0.25 from an integer are flagged; downstream
    classification treats flagged points as under-resolved rather than
    rounding them silently.
    """
    prof = frequency_profile(u, spec, x0, radii, rules)
    k = int(round(prof.limit))
    conf = 0.5 - abs(prof.limit - k)
    flagged = abs(prof.limit - k) > OrderEstimate.INTEGER_REJECT or prof.flagged
    return OrderEstimate(max(k, 0), prof.limit, conf, flagged, prof)


# ----------------------------------------------------------------------
# Projection onto the degree-k space
# ----------------------------------------------------------------------

_GRAM_CACHE: dict = {}


def _gram(N: int, k: int, a: float):
    """Exact weighted-H^1(B_1^+) Gram matrix of the degree-k basis."""
    key = (N, k, a)
    if key not in _GRAM_CACHE:
        B = basis(N, k, a)
        m = len(B)
        G = np.empty((m, m))
        polys = [b.as_poly() for b in B]
        grads = [p.gradient() for p in polys]
        for i in range(m):
            for j in range(i, m):
                q = polys[i] * polys[j]
                for gi, gj in zip(grads[i], grads[j]):
                    q = q + gi * gj
                G[i, j] = G[j, i] = ball_integral_poly(q, N, a, 1.0)
        _GRAM_CACHE[key] = (B, G)
    return _GRAM_CACHE[key]


def _project(v: Field, N: int, k: int, a: float, rules: BallRules) -> np.ndarray:
    """Coefficients of the weighted-H^1 projection of v onto the basis."""
    B, G = _gram(N, k, a)
    pts, w = rules.ball(np.zeros(N), 1.0)
    vals = v.values(pts)
    grads = v.gradients(pts)
    rhs = np.empty(len(B))
    for i, b in enumerate(B):
        bv = b.evaluate(pts)
        bg = b.gradient(pts)
        rhs[i] = float(w @ (vals * bv + np.sum(grads * bg, axis=1)))
    return np.linalg.solve(G, rhs)


@dataclass
class BlowupFit:
    k: int
    poly: AHarmonicPolynomial
    coefficients: np.ndarray          # extrapolated basis coefficients
    radii: np.ndarray
    coeff_history: np.ndarray         # (n_radii, dim)
    diffs: np.ndarray
    cauchy_ok: bool
    flagged: bool


def fit_blowup(u, spec: ProblemSpec, x0, k: int, radii, rules=None) -> BlowupFit:
    """Weighted least squares of the order-k rescalings against the basis.

    Per-radius coefficient vectors must behave like a Cauchy sequence (the
    limit polynomial is unique); stagnating or growing differences reject
    the fit.
    """
    u = _as_field(u)
    rules = rules or default_rules(u.N, spec.a)
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]  # large to small
    if len(radii) < 2:
        raise ValueError("need at least two radii to certify the fit")
    hist = []
    for r in radii:
        v = RescaledField(u, x0, r, r ** k)
        hist.append(_project(v, u.N, k, spec.a, rules))
    hist = np.array(hist)
    limits = np.array([fit_power_offset(radii, hist[:, j], 1.0 - spec.a)[0]
                       for j in range(hist.shape[1])])
    diffs = np.linalg.norm(np.diff(hist, axis=0), axis=1)
    scale = max(float(np.linalg.norm(limits)), 1e-300)
    cauchy_ok = bool(diffs[-1] <= max(1.5 * diffs[0], 1e-9 * scale))
    B, _ = _gram(u.N, k, spec.a)
    poly = combine(B, limits)
    return BlowupFit(k, poly, limits, radii, hist, diffs, cauchy_ok, not cauchy_ok)


@dataclass
class NondegeneracyReport:
    k: int
    C1: float                # max over shells of r^-k sup |u|
    C2: float                # min over shells of r^-k sup |u|
    h_ratios: np.ndarray     # H(r) / r^(2k)
    oscillation: float       # relative oscillation over the last three shells
    gamma: float
    degenerate: bool

    OSCILLATION_TOL = 0.05
    COLLAPSE_RATIO = 0.2

    @property
    def ok(self) -> bool:
        return not self.degenerate


def nondegeneracy_check(u, spec: ProblemSpec, x0, k: int, radii,
                        rules=None) -> NondegeneracyReport:
    """Two-sided growth bounds r^k and convergence of H(r)/r^(2k).

    A collapsing lower constant or a drifting normalized H indicates the
    supplied order is wrong.
    """
    u = _as_field(u)
    rules = rules or default_rules(u.N, spec.a)
    radii = np.sort(np.asarray(radii, dtype=float))
    sups = np.empty_like(radii)
    hr = np.empty_like(radii)
    for i, r in enumerate(radii):
        spts, _, _ = rules.sphere(np.atleast_1d(x0), r)
        sups[i] = float(np.max(np.abs(u.values(spts)))) / r ** k
        _, H, _ = compute_DHG(u, spec, x0, r, rules)
        hr[i] = H / r ** (2 * k)
    C1, C2 = float(sups.max()), float(sups.min())
    tail = hr[:3]  # the three smallest radii: the end of the blow-up sequence
    osc = float((tail.max() - tail.min()) / max(abs(tail).max(), 1e-300))
    gamma, _ = fit_power_offset(radii, hr, 1.0 - spec.a)
    degenerate = (C2 <= NondegeneracyReport.COLLAPSE_RATIO * C1
                  or osc > NondegeneracyReport.OSCILLATION_TOL
                  or gamma <= 0.0)
    return NondegeneracyReport(k, C1, C2, hr, osc, float(gamma), degenerate)


@dataclass
class BlowupReport:
    x0: np.ndarray
    k: int
    gamma: float
    poly: AHarmonicPolynomial
    radii: np.ndarray
    trace_sup_residuals: np.ndarray
    sphere_residuals: np.ndarray
    monneau_tail: np.ndarray
    h_ratios: np.ndarray
    order_estimate: OrderEstimate
    fit: BlowupFit
    nondegeneracy: NondegeneracyReport
    sqrt_h_factor_sq: float | None
    flagged: bool

    def to_json(self) -> dict:
        return {
            "x0": list(map(float, np.atleast_1d(self.x0))),
            "k": int(self.k),
            "gamma": float(self.gamma),
            "polynomial": self.poly.to_json(),
            "radii": [float(v) for v in self.radii],
            "trace_sup_residuals": [float(v) for v in self.trace_sup_residuals],
            "sphere_residuals": [float(v) for v in self.sphere_residuals],
            "monneau_tail": [float(v) for v in self.monneau_tail],
            "h_ratios": [float(v) for v in self.h_ratios],
            "order_limit": self.order_estimate.limit,
            "order_confidence": self.order_estimate.confidence,
            "coefficients": [float(v) for v in self.fit.coefficients],
            "cauchy_ok": self.fit.cauchy_ok,
            "C1": self.nondegeneracy.C1,
            "C2": self.nondegeneracy.C2,
            "oscillation": self.nondegeneracy.oscillation,
            "sqrt_h_factor_sq": self.sqrt_h_factor_sq,
            "flagged": bool(self.flagged),
        }

    def save(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)


def blowup_report(u, spec: ProblemSpec, x0, radii, rules=None,
                  k: int | None = None, order_radii=None,
                  check_sqrt_h: bool = True) -> BlowupReport:
    """Full pipeline at one center: order, fit, residuals, nondegeneracy."""
    u = _as_field(u)
    rules = rules or default_rules(u.N, spec.a)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    radii = np.sort(np.asarray(radii, dtype=float))
    est = estimate_order(u, spec, x0, radii if order_radii is None else order_radii, rules)
    if k is None:
        k = est.k
    fit = fit_blowup(u, spec, x0, k, radii, rules)
    nd = nondegeneracy_check(u, spec, x0, k, radii, rules)
    tr_res = np.empty(len(radii))
    sp_res = np.empty(len(radii))
    tx, _ = rules.thin(np.zeros(u.N), 1.0)
    for i, r in enumerate(radii):
        v = RescaledField(u, x0, r, r ** k)
        tr_res[i] = float(np.max(np.abs(v.trace_values(tx) - fit.poly.trace_values(tx))))
        spts, sw, omega = rules.sphere(np.zeros(u.N), 1.0)
        diff = v.values(spts) - fit.poly.evaluate(spts)
        sp_res[i] = float(np.sqrt(max(sw @ diff ** 2, 0.0)))
    tail = monneau_profile(u, fit.poly, x0, radii, rules)
    factor_sq = None
    if check_sqrt_h and nd.gamma > 0:
        v = rescale(u, x0, radii[0], "sqrt_h", spec=spec, rules=rules)
        c = _project(v, u.N, k, spec.a, rules)
        denom = float(c @ c)
        if denom > 0:
            factor_sq = float(fit.coefficients @ fit.coefficients) / denom
    flagged = est.flagged or fit.flagged or nd.degenerate
    return BlowupReport(x0, k, nd.gamma, fit.poly, radii, tr_res, sp_res,
                        tail, nd.h_ratios, est, fit, nd, factor_sq, flagged)


@dataclass
class ContinuityReport:
    points: np.ndarray
    coeff_vectors: np.ndarray
    pair_point_dist: np.ndarray
    pair_coeff_dist: np.ndarray
    envelope: list

    def modulus_ok(self, tol_at_zero: float = 1e-6) -> bool:
        if not len(self.pair_point_dist):
            return True
        closest = np.argmin(self.pair_point_dist)
        return (self.pair_point_dist[closest] > 0
                or self.pair_coeff_dist[closest] <= tol_at_zero)


def blowup_continuity_probe(u, spec: ProblemSpec, points, k: int, radii,
                            rules=None) -> ContinuityReport:
    """Empirical modulus of continuity of the center -> limit-polynomial map."""
    u = _as_field(u)
    rules = rules or default_rules(u.N, spec.a)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    coeffs = np.array([fit_blowup(u, spec, x0, k, radii, rules).coefficients
                       for x0 in points])
    n = len(points)
    pd, cd = [], []
    for i in range(n):
        for j in range(i + 1, n):
            pd.append(float(np.linalg.norm(points[i] - points[j])))
            cd.append(float(np.linalg.norm(coeffs[i] - coeffs[j])))
    pd, cd = np.array(pd), np.array(cd)
    order = np.argsort(pd)
    env, best = [], 0.0
    for idx in order:
        best = max(best, cd[idx])
        env.append((float(pd[idx]), best))
    return ContinuityReport(points, coeffs, pd, cd, env)
