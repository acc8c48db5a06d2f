"""Nodal-set extraction, point classification and dimension estimates.

The zero set of the trace is located by per-cell sign changes plus a
zero-band branch that catches even-order touching zeros; plateaus (cells
whose whole neighborhood sits inside the band) are excluded as
discretization artifacts, since a genuine interior of zeros would force the
whole solution to vanish.  Points are classified through the frequency
limit: order 1 is the regular part (equivalently a nonvanishing trace
gradient: both tests run, disagreements are flagged), higher integer orders
are singular and carry the blow-up type (trace-harmonic vs y-dependent) and
the degeneracy dimension of the limit polynomial.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .blowup import estimate_order, fit_blowup
from .fields import Field, PolynomialField
from .functionals import _as_field, default_rules
from .polyalg import Poly
from .polynomials import (
    STAR,
    Y_DEPENDENT,
    AHarmonicPolynomial,
    classify_star_or_y,
    degeneracy_dimension,
)
from .solver import ProblemSpec, SolutionField

__all__ = [
    "NodalSet",
    "extract_nodal_set",
    "extract_nodal_set_grid",
    "PointClassification",
    "classify_point",
    "NodalClassification",
    "stratify",
    "box_counting_dimension",
    "aharmonic_from_even_poly",
]

REGULAR = "Regular"
SINGULAR = "Singular"
UNCLASSIFIED = "Unclassified"


@dataclass
class NodalSet:
    points: np.ndarray            # (Q, N) representative cell midpoints
    band: float
    artifacts: int                # plateau cells excluded
    empty: bool

    def __len__(self):
        return len(self.points)


def _band_estimate(x, v):
    """3x the local linear-interpolation error of the sampled trace."""
    if len(x) < 3:
        return 1e-12
    d2 = np.abs(np.diff(v, 2))
    return 3.0 * max(float(np.max(d2)) / 8.0, 1e-14 * float(np.max(np.abs(v)) or 1.0))


def extract_nodal_set(u: SolutionField, zero_band: float | None = None,
                      plateau_cells: int = 4) -> NodalSet:
    """Trace-cell midpoints where the discrete trace crosses or touches zero."""
    if not isinstance(u, SolutionField):
        raise TypeError("extract_nodal_set expects a discrete solution; "
                        "use extract_nodal_set_grid for analytic fields")
    if u.N == 1:
        xs, vals = u.trace_grid()
        return _extract_1d(xs[:, 0], vals, zero_band, plateau_cells)
    return _extract_2d(u, zero_band)


def _extract_1d(x, v, zero_band, plateau_cells):
    scale = float(np.max(np.abs(v)))
    band = zero_band if zero_band is not None else _band_estimate(x, v)
    if scale <= band:
        # the whole trace sits inside the zero band
        raise ValueError("trace vanishes identically within the zero band; "
                         "a nontrivial solution cannot have an interior of zeros")
    near = np.abs(v) <= band
    pts = []
    artifacts = 0
    crossing_cell = (v[:-1] * v[1:] < 0.0) & ~near[:-1] & ~near[1:]
    mids = 0.5 * (x[:-1] + x[1:])
    pts.extend(mids[crossing_cell])
    # zero-band branch: runs of near-zero nodes
    i = 0
    n = len(v)
    while i < n:
        if not near[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and near[j + 1]:
            j += 1
        run = j - i + 1
        if run > plateau_cells:
            artifacts += run - 2
            pts.append(x[i])
            pts.append(x[j])
        else:
            kmin = i + int(np.argmin(np.abs(v[i:j + 1])))
            pts.append(x[kmin])
        i = j + 1
    pts = np.unique(np.asarray(pts, dtype=float))
    return NodalSet(pts[:, None], float(band), artifacts, len(pts) == 0)


def _extract_2d(u: SolutionField, zero_band):
    """Ring-wise and ray-wise 1D scans of the polar trace grid.

    Each ring and each ray is a 1D sampled function, so the crossing /
    zero-band / plateau logic of the 1D extractor applies verbatim; the
    union of both scans catches curves however they cross the grid.
    """
    d = u.disc
    alphas = np.concatenate([-d.theta[:0:-1], d.theta])
    rad = d.radii
    V = np.zeros((len(rad), len(alphas)))
    for i in range(1, len(rad)):
        for m, al in enumerate(alphas):
            j = int(round(abs(al) / (np.pi / d.n_ang)))
            l = 0 if al >= 0 else d.n_ang
            V[i, m] = u.u[int(d.dof2(i, j, l))]
    V[0, :] = u.u[0]
    scale = float(np.max(np.abs(V)))
    if zero_band is not None:
        bands = np.full(len(rad), float(zero_band))
        band = float(zero_band)
    else:
        # per-ring bands: trace values scale with the ring radius
        bands = np.array([_band_estimate(alphas, V[i, :]) for i in range(len(rad))])
        bands = np.maximum(bands, 1e-14 * scale)
        band = float(np.median(bands[1:]))
    if scale <= band:
        raise ValueError("trace vanishes identically within the zero band")
    pts = []
    artifacts = 0
    for i in range(1, len(rad)):
        try:
            sub = _extract_1d(alphas, V[i, :], bands[i], 4)
        except ValueError:
            artifacts += len(alphas)
            continue
        artifacts += sub.artifacts
        for am in sub.points[:, 0]:
            pts.append([rad[i] * math.cos(am), rad[i] * math.sin(am)])
    for m in range(len(alphas)):
        col = V[:, m]
        cross = col[:-1] * col[1:] < 0.0
        clear = (np.abs(col[:-1]) > bands[:-1]) & (np.abs(col[1:]) > bands[1:])
        for i in np.nonzero(cross & clear)[0]:
            rm = 0.5 * (rad[i] + rad[i + 1])
            pts.append([rm * math.cos(alphas[m]), rm * math.sin(alphas[m])])
    pts = np.asarray(pts, dtype=float) if pts else np.zeros((0, 2))
    if len(pts):
        # deduplicate representatives landing in the same trace cell
        rho = np.linalg.norm(pts, axis=1)
        ang = np.arctan2(pts[:, 1], pts[:, 0])
        key = np.stack([np.searchsorted(rad, rho * (1 - 1e-12)),
                        np.searchsorted(alphas, ang * (1 - 1e-12))], axis=1)
        _, keep = np.unique(key, axis=0, return_index=True)
        pts = pts[np.sort(keep)]
    return NodalSet(pts, band, artifacts, len(pts) == 0)


def extract_nodal_set_grid(field, N: int, resolution: int = 64,
                           zero_band: float | None = None,
                           radius: float = 1.0) -> NodalSet:
    """Cartesian-grid extraction for analytic trace fields in any dimension."""
    field = _as_field(field)
    axes = [np.linspace(-radius, radius, resolution + 1)] * N
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    vals = field.trace_values(pts).reshape(grids[0].shape)
    h = 2.0 * radius / resolution
    if zero_band is None:
        curv = 0.0
        for ax in range(N):
            curv = max(curv, float(np.max(np.abs(np.diff(vals, 2, axis=ax)))))
        zero_band = 3.0 * curv / 8.0 + 1e-14
    scale = float(np.max(np.abs(vals)))
    if scale <= zero_band:
        raise ValueError("field vanishes identically within the zero band")
    out = []
    it = np.ndindex(*(resolution,) * N)
    for idx in it:
        corner_slices = tuple(slice(i, i + 2) for i in idx)
        corners = vals[corner_slices].ravel()
        mid = np.array([axes[ax][idx[ax]] + 0.5 * h for ax in range(N)])
        if np.linalg.norm(mid) > radius:
            continue
        crossing = corners.min() < -zero_band and corners.max() > zero_band
        touching = np.min(np.abs(corners)) <= zero_band
        if crossing or touching:
            out.append(mid)
    pts = np.asarray(out, dtype=float) if out else np.zeros((0, N))
    return NodalSet(pts, float(zero_band), 0, len(pts) == 0)


# ----------------------------------------------------------------------
# Classification
# ----------------------------------------------------------------------

@dataclass
class PointClassification:
    x0: np.ndarray
    kind: str
    k: int | None
    confidence: float
    blowup_type: str | None
    degeneracy: int | None
    gradient_norm: float
    gradient_threshold: float
    tests_agree: bool
    limit: float | None = None
    poly: AHarmonicPolynomial | None = None

    def to_json(self) -> dict:
        return {
            "x0": list(map(float, np.atleast_1d(self.x0))),
            "kind": self.kind,
            "k": self.k,
            "confidence": self.confidence,
            "type": self.blowup_type,
            "d": self.degeneracy,
            "gradient_norm": self.gradient_norm,
            "gradient_threshold": self.gradient_threshold,
            "tests_agree": self.tests_agree,
            "limit": self.limit,
        }


def aharmonic_from_even_poly(P: Poly, a: float) -> AHarmonicPolynomial:
    """Reinterpret a homogeneous, even-in-y polynomial as a layered element."""
    N = P.nvars - 1
    k = P.degree()
    layers = [Poly.zero(N) for _ in range(k // 2 + 1)]
    for e, c in P.terms.items():
        ny = e[N]
        if ny % 2:
            raise ValueError("polynomial is not even in y")
        layers[ny // 2].terms[e[:N]] = layers[ny // 2].terms.get(e[:N], 0.0) + c
    return AHarmonicPolynomial(N, k, a, layers)


def classify_point(u, spec: ProblemSpec | None, x0, radii=None, rules=None,
                   gradient_threshold: float | None = None,
                   star_tol: float = 1e-8, rank_tol: float = 1e-8,
                   resolution_scale: float | None = None) -> PointClassification:
    """Order, regular/singular kind and blow-up type at one nodal point.

    Polynomial fields are classified exactly through recentering; discrete
    fields go through the frequency/blow-up pipeline.  The frequency-based
    and gradient-based regularity tests must agree or the point is flagged.
    `resolution_scale` is the extraction cell size: detected midpoints sit
    within one cell of the true zero, so the recentering snaps to the local
    trace minimum and ranks homogeneous parts at that scale.
    """
    u = _as_field(u)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if isinstance(u, PolynomialField):
        return _classify_polynomial(u, x0, spec, star_tol, rank_tol, resolution_scale)
    if spec is None or radii is None:
        raise ValueError("discrete classification needs the problem spec and radii")
    rules = rules or default_rules(u.N, spec.a)
    grad = u.trace_gradients(x0[None, :])[0]
    gnorm = float(np.linalg.norm(grad))
    if gradient_threshold is None:
        gradient_threshold = _gradient_threshold(u, x0)
    est = estimate_order(u, spec, x0, radii, rules)
    if est.flagged:
        return PointClassification(x0, UNCLASSIFIED, None, est.confidence, None, None,
                                   gnorm, gradient_threshold, True, est.limit)
    if est.k == 0:
        # nonvanishing limit: the candidate is not actually on the zero set
        return PointClassification(x0, UNCLASSIFIED, 0, est.confidence, None, None,
                                   gnorm, gradient_threshold, True, est.limit)
    freq_regular = est.k == 1
    grad_regular = gnorm > gradient_threshold
    agree = freq_regular == grad_regular
    if freq_regular:
        return PointClassification(x0, REGULAR, 1, est.confidence, None, None,
                                   gnorm, gradient_threshold, agree, est.limit)
    fit = fit_blowup(u, spec, x0, est.k, radii, rules)
    if fit.flagged:
        return PointClassification(x0, UNCLASSIFIED, est.k, est.confidence, None, None,
                                   gnorm, gradient_threshold, agree, est.limit)
    btype = classify_star_or_y(fit.poly, star_tol)
    d = degeneracy_dimension(fit.poly, rank_tol)
    return PointClassification(x0, SINGULAR, est.k, est.confidence, btype, d,
                               gnorm, gradient_threshold, agree, est.limit, fit.poly)


def _gradient_threshold(u: SolutionField, x0) -> float:
    """10x a crude differencing-error estimate from the local trace scale."""
    xs, vals = u.trace_grid()
    scale = float(np.max(np.abs(vals)))
    if u.N == 1:
        h = float(np.max(np.diff(np.sort(xs[:, 0]))))
    else:
        h = float(np.max(np.diff(u.disc.radii)))
    return 10.0 * scale * h ** 2


def _snap_to_zero(u: PolynomialField, x0, radius: float, levels: int = 4):
    """Nested grid search for the trace zero nearest to x0."""
    N = len(x0)
    best = np.asarray(x0, dtype=float)
    r = radius
    for _ in range(levels):
        axes = [np.linspace(c - r, c + r, 5) for c in best]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        vals = np.abs(u.trace_values(pts))
        best = pts[int(np.argmin(vals))]
        r /= 4.0
    return best


def _classify_polynomial(u: PolynomialField, x0, spec, star_tol, rank_tol,
                         resolution_scale=None):
    a = spec.a if spec is not None else 0.0
    N = u.N
    if resolution_scale:
        x0 = _snap_to_zero(u, x0, resolution_scale)
    rho = resolution_scale if resolution_scale else 1e-9
    shifted = u.poly.shift(np.concatenate([x0, [0.0]]))
    if shifted.coeff_norm() == 0.0:
        raise ValueError("field vanishes identically at %s" % x0)
    # rank homogeneous parts at the resolution scale: the residual traces of
    # lower-degree parts left by inexact recentering decay like (snap/rho)^j
    sizes = [shifted.homogeneous_part(d_).coeff_norm() * rho ** d_
             for d_ in range(shifted.degree() + 1)]
    k = int(np.argmax(sizes))
    if k == 0:
        raise ValueError("%s is not a nodal point (nonzero value)" % x0)
    part = shifted.homogeneous_part(k)
    grad = u.trace_gradients(x0[None, :])[0]
    gnorm = float(np.linalg.norm(grad))
    if k == 1:
        return PointClassification(x0, REGULAR, 1, 0.5, None, None, gnorm, 0.0,
                                   gnorm > 0, float(k))
    pk = aharmonic_from_even_poly(part, a)
    btype = classify_star_or_y(pk, star_tol)
    d = degeneracy_dimension(pk, rank_tol)
    return PointClassification(x0, SINGULAR, k, 0.5, btype, d, gnorm, 0.0,
                               gnorm == 0.0 or k == 1, float(k), pk)


# ----------------------------------------------------------------------
# Stratification and dimension
# ----------------------------------------------------------------------

@dataclass
class NodalClassification:
    N: int
    points: list
    regular: list
    singular: list
    unclassified: list
    strata_y: dict          # n -> list of point indices
    strata_star: dict
    inconsistencies: list
    dimension_fits: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "points": [p.to_json() for p in self.points],
            "regular": self.regular,
            "singular": self.singular,
            "unclassified": self.unclassified,
            "strata_y": {str(k): v for k, v in self.strata_y.items()},
            "strata_star": {str(k): v for k, v in self.strata_star.items()},
            "inconsistencies": self.inconsistencies,
            "dimension_fits": self.dimension_fits,
        }

    def save(self, prefix: str):
        with open(prefix + ".json", "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
        buf = io.StringIO()
        buf.write(",".join("x%d" % (i + 1) for i in range(self.N))
                  + ",kind,k,type,d\n")
        for p in self.points:
            x = list(np.atleast_1d(p.x0)) + [0.0] * (self.N - len(np.atleast_1d(p.x0)))
            buf.write(",".join("%.17g" % v for v in x[:self.N]))
            buf.write(",%s,%s,%s,%s\n" % (p.kind, p.k, p.blowup_type, p.degeneracy))
        with open(prefix + ".csv", "w") as fh:
            fh.write(buf.getvalue())


def stratify(classifications: list[PointClassification], N: int) -> NodalClassification:
    """Membership tables for the y-dependent and trace-harmonic strata.

    Every singular point lands in exactly one stratum; trace-harmonic limits
    are harmonic in x, so their degeneracy cannot reach N-1 and such a
    record is reported as inconsistent.
    """
    regular, singular, unclassified = [], [], []
    strata_y: dict[int, list] = {}
    strata_star: dict[int, list] = {}
    problems = []
    for idx, c in enumerate(classifications):
        if c.kind == REGULAR:
            regular.append(idx)
        elif c.kind == SINGULAR:
            singular.append(idx)
            if c.blowup_type == STAR:
                if c.degeneracy is not None and c.degeneracy > N - 2:
                    problems.append({"index": idx,
                                     "reason": "trace-harmonic limit with d = N-1"})
                strata_star.setdefault(c.degeneracy, []).append(idx)
            elif c.blowup_type == Y_DEPENDENT:
                strata_y.setdefault(c.degeneracy, []).append(idx)
            else:
                problems.append({"index": idx, "reason": "singular point without type"})
        else:
            unclassified.append(idx)
    assigned = sorted(i for lst in list(strata_y.values()) + list(strata_star.values())
                      for i in lst)
    if assigned != sorted(singular):
        problems.append({"reason": "stratum membership does not partition the singular set"})
    return NodalClassification(N, classifications, regular, singular, unclassified,
                               strata_y, strata_star, problems)


def box_counting_dimension(points: np.ndarray, scales) -> tuple[float, float, list]:
    """Slope of log N(eps) against log 1/eps with the regression quality.

    An empty set is the caller's branch, not an error here; a single point
    returns dimension 0 with a degenerate fit marked by R^2 = 1.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    scales = np.asarray(sorted(scales, reverse=True), dtype=float)
    if len(scales) < 4:
        raise ValueError("need at least 4 box scales")
    if len(points) == 0:
        raise ValueError("empty point set: report the empty branch instead")
    origin = points.min(axis=0)
    counts = []
    for eps in scales:
        idx = np.floor((points - origin) / eps).astype(np.int64)
        counts.append(len(np.unique(idx, axis=0)))
    counts = np.asarray(counts, dtype=float)
    X = np.log(1.0 / scales)
    Y = np.log(counts)
    if np.allclose(Y, Y[0]):
        return (0.0, 1.0, list(zip(scales.tolist(), counts.tolist())))
    A = np.stack([np.ones_like(X), X], axis=1)
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    fitted = A @ coef
    ss_res = float(np.sum((Y - fitted) ** 2))
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[1]), r2, list(zip(scales.tolist(), counts.tolist()))
