"""Polar half-ball meshes with weight-exact quadrature for y^a.

Geometry is the upper half-ball B_1^+ in R^(N+1); integrals carry the
Muckenhoupt weight y^a with a in (-1, 1).  The mesh is a structured polar
grid: graded radial shells times uniform angular panels, with hyperspherical
angles theta_1..theta_N (the last coordinate of a point is y >= 0).

Quadrature design:
  * angular panels touching the weight-singular ends of each angle carry
    one-sided Gauss-Jacobi rules in the distance to the endpoint, with the
    analytic correction (sin t / t)^A folded into the weights;
  * interior angular panels carry Gauss-Legendre rules with the weight
    evaluated at the nodes;
  * the radial shell at the origin carries a Gauss-Jacobi rule for the
    exact weight rho^(N+a); outer shells are subdivided geometrically so a
    fixed-order Gauss-Legendre rule resolves the fractional power to
    roundoff.

Sphere integrals at grid radii are plain sums over the angular rule, so the
radius sweeps used by the monotone functionals need no interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc, roots_jacobi

__all__ = [
    "QuadratureMesh",
    "build_half_ball_mesh",
    "BallRules",
    "power_moment",
    "weighted_angle_primitive",
]


# ----------------------------------------------------------------------
# 1D building blocks
# ----------------------------------------------------------------------

@lru_cache(maxsize=256)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


@lru_cache(maxsize=256)
def _jacobi_left(n: int, expo: float):
    """Nodes/weights on [0, 1] for integrals of t^expo * f(t)."""
    x, w = roots_jacobi(n, 0.0, expo)
    t = 0.5 * (x + 1.0)
    wt = w / 2.0 ** (expo + 1.0)
    return t, wt


def power_moment(lo: float, hi: float, c: float) -> float:
    """integral of r^c over [lo, hi]; handles the logarithmic exponent."""
    if abs(c + 1.0) < 1e-14:
        return math.log(hi / lo)
    return (hi ** (c + 1.0) - lo ** (c + 1.0)) / (c + 1.0)


def weighted_angle_primitive(theta, a: float):
    """S(theta) = integral of sin(t)^(-a) on [0, theta], theta in [0, pi].

    This is the harmonic angular coordinate of the 1D operator
    (sin^a u')' = 0; linear interpolation in S reproduces both constants and
    the t^(1-a)-type profiles the weight generates at the thin space.
    """
    theta = np.asarray(theta, dtype=float)
    p, q = 0.5 * (1.0 - a), 0.5
    full = beta_fn(p, q)

    def _half(t):
        # (1/2) * incomplete Beta(sin^2 t; p, q) for t <= pi/2
        s2 = np.clip(np.sin(t) ** 2, 0.0, 1.0)
        return 0.5 * betainc(p, q, s2) * full

    upper = theta > 0.5 * np.pi
    out = np.where(upper, full - _half(np.pi - theta), _half(theta))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Rule1D:
    nodes: np.ndarray
    weights: np.ndarray


def angular_panel_rules(A: float, edges: np.ndarray, order: int) -> list[Rule1D]:
    """Composite rule for integrals of sin(t)^A * f(t) over [0, pi].

    Returns one rule per panel; weights include the sin^A factor.
    """
    rules = []
    last = len(edges) - 2
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        if i == 0:
            t, w = _jacobi_left(order, A)
            nodes = lo + (hi - lo) * t
            wts = w * (hi - lo) ** (A + 1.0) * (np.sin(nodes) / nodes) ** A
        elif i == last:
            t, w = _jacobi_left(order, A)
            nodes = hi - (hi - lo) * t
            wts = w * (hi - lo) ** (A + 1.0) * (np.sin(nodes) / (np.pi - nodes)) ** A
        else:
            x, w = _leggauss(order)
            nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
            wts = 0.5 * (hi - lo) * w * np.sin(nodes) ** A
        rules.append(Rule1D(nodes, wts))
    return rules


def angular_subdivided_rule(A: float, lo: float, hi: float, order: int,
                            singular: str | None = None, levels: int = 8) -> Rule1D:
    """Geometrically refined rule for sin(t)^A * f(t) on one angular cell.

    Used where f itself has an algebraic singularity at the cell end (the
    harmonic-coordinate shape functions behave like t^(1-a) there); the
    refinement pushes the uncaptured singular mass below roundoff.
    """
    if singular is None:
        x, w = _leggauss(order)
        nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
        return Rule1D(nodes, 0.5 * (hi - lo) * w * np.sin(nodes) ** A)
    if singular == "left" and lo != 0.0:
        raise ValueError("left-singular cells must start at 0")
    if singular == "right" and hi != np.pi:
        raise ValueError("right-singular cells must end at pi")
    width = hi - lo
    cuts = [width * 2.0 ** (-k) for k in range(levels, -1, -1)]
    nodes, wts = [], []
    t, wj = _jacobi_left(order, A)
    first = cuts[0]
    n0 = first * t
    wts0 = wj * first ** (A + 1.0)
    nodes.append(n0)
    wts.append(wts0 * (np.sin(n0 if singular == "left" else hi - n0) / n0) ** A)
    x, w = _leggauss(order)
    for a_, b_ in zip(cuts[:-1], cuts[1:]):
        n = 0.5 * (a_ + b_) + 0.5 * (b_ - a_) * x
        nodes.append(n)
        theta = n if singular == "left" else hi - n
        wts.append(0.5 * (b_ - a_) * w * np.sin(theta) ** A)
    off = np.concatenate(nodes)
    wts = np.concatenate(wts)
    if singular == "left":
        return Rule1D(lo + off, wts)
    return Rule1D(hi - off, wts)


def radial_shell_rule(lo: float, hi: float, c: float, order: int) -> Rule1D:
    """Rule for integrals of rho^c * f(rho) over a shell [lo, hi].

    The innermost shell (lo == 0) uses the exact Jacobi weight; other shells
    are split geometrically (panel width <= left endpoint) so the smooth
    fractional power is integrated to roundoff by Gauss-Legendre panels.
    """
    if lo == 0.0:
        t, w = _jacobi_left(order, c)
        return Rule1D(hi * t, w * hi ** (c + 1.0))
    cuts = [lo]
    while cuts[-1] * 2.0 < hi:
        cuts.append(cuts[-1] * 2.0)
    cuts.append(hi)
    nodes, wts = [], []
    x, w = _leggauss(order)
    for a_, b_ in zip(cuts[:-1], cuts[1:]):
        n = 0.5 * (a_ + b_) + 0.5 * (b_ - a_) * x
        nodes.append(n)
        wts.append(0.5 * (b_ - a_) * w * n ** c)
    return Rule1D(np.concatenate(nodes), np.concatenate(wts))


# ----------------------------------------------------------------------
# Field-vs-callable adapters
# ----------------------------------------------------------------------

def _field_values(f, pts):
    vals = f.values(pts) if hasattr(f, "values") else f(pts)
    return np.asarray(vals, dtype=float)


def _trace_values(f, x):
    if hasattr(f, "trace_values"):
        vals = f.trace_values(x)
    elif hasattr(f, "values"):
        pts = np.concatenate([x, np.zeros((x.shape[0], 1))], axis=1)
        vals = f.values(pts)
    else:
        vals = f(x)
    return np.asarray(vals, dtype=float)


# ----------------------------------------------------------------------
# Mesh
# ----------------------------------------------------------------------

class QuadratureMesh:
    """Structured polar mesh on the half-ball with weight-exact quadrature.

    Supports any N >= 1 for pure quadrature; the variational solver uses
    N in {1, 2}.  Angular direction d in 1..N carries the combined exponent
    (N - d) + a coming from the surface measure and the weight.
    """

    def __init__(self, N: int, a: float, radii, angular_cells: int,
                 panel_order: int, grading: float):
        if N < 1:
            raise ValueError("dimension N must be >= 1")
        if not (-1.0 < a < 1.0):
            raise ValueError("weight exponent a must lie in (-1, 1), got %r" % a)
        self.N = int(N)
        self.a = float(a)
        self.radii = np.asarray(radii, dtype=float)
        if self.radii[0] != 0.0 or np.any(np.diff(self.radii) <= 0):
            raise ValueError("radii must increase from 0")
        self.n_ang = int(angular_cells)
        self.panel_order = int(panel_order)
        self.grading = float(grading)

        self.angle_edges = np.linspace(0.0, np.pi, self.n_ang + 1)
        self._ang_rules = [
            angular_panel_rules((self.N - d) + self.a, self.angle_edges, panel_order)
            for d in range(1, self.N + 1)
        ]
        self._shell_rules = [
            radial_shell_rule(self.radii[i], self.radii[i + 1], self.N + self.a, panel_order)
            for i in range(len(self.radii) - 1)
        ]
        self._surface_cache = None
        self._shell_node_cache = {}

    # -- helpers -------------------------------------------------------
    @property
    def levels(self) -> int:
        return len(self.radii) - 1

    def radius_index(self, r: float) -> int:
        i = int(np.argmin(np.abs(self.radii - r)))
        if abs(self.radii[i] - r) > 1e-9 * max(1.0, abs(r)):
            raise ValueError("r=%r is not a grid radius (nearest: %r)" % (r, self.radii[i]))
        if i == 0:
            raise ValueError("r must be positive")
        return i

    def _angles_to_points(self, angle_nodes: list[np.ndarray]) -> np.ndarray:
        """Map a tensor grid of hyperspherical angles to unit-sphere points."""
        grids = np.meshgrid(*angle_nodes, indexing="ij")
        shape = grids[0].shape
        pts = np.empty(shape + (self.N + 1,))
        sin_prod = np.ones(shape)
        for d in range(self.N):
            pts[..., d] = sin_prod * np.cos(grids[d])
            sin_prod = sin_prod * np.sin(grids[d])
        pts[..., self.N] = sin_prod
        return pts.reshape(-1, self.N + 1)

    def surface_rule(self):
        """Unit half-sphere nodes and weights for integrals of y^a * f."""
        if self._surface_cache is None:
            node_lists, weight_lists = [], []
            for rules in self._ang_rules:
                node_lists.append(np.concatenate([r.nodes for r in rules]))
                weight_lists.append(np.concatenate([r.weights for r in rules]))
            pts = self._angles_to_points(node_lists)
            w = weight_lists[0]
            for wl in weight_lists[1:]:
                w = np.multiply.outer(w, wl)
            self._surface_cache = (pts, w.reshape(-1))
        return self._surface_cache

    def _shell_nodes(self, i: int):
        """Quadrature points/weights for shell i (between radii[i] and radii[i+1])."""
        if i not in self._shell_node_cache:
            omega, w_ang = self.surface_rule()
            rr = self._shell_rules[i]
            pts = rr.nodes[:, None, None] * omega[None, :, :]
            w = rr.weights[:, None] * w_ang[None, :]
            self._shell_node_cache[i] = (pts.reshape(-1, self.N + 1), w.reshape(-1))
        return self._shell_node_cache[i]

    # -- integral operations -------------------------------------------
    def weighted_volume_integral(self, f, r: float) -> float:
        """integral over B_r^+ of y^a * f, r a grid radius."""
        idx = self.radius_index(r)
        total = 0.0
        for i in range(idx):
            pts, w = self._shell_nodes(i)
            vals = _field_values(f, pts)
            if not np.all(np.isfinite(vals)):
                raise ValueError("integrand produced non-finite values")
            total += float(w @ vals)
        return total

    def weighted_shell_integral(self, f, i: int) -> float:
        pts, w = self._shell_nodes(i)
        return float(w @ _field_values(f, pts))

    def weighted_sphere_integral(self, f, r: float) -> float:
        """integral over S_r^+ of y^a * f, r a grid radius."""
        self.radius_index(r)
        omega, w = self.surface_rule()
        vals = _field_values(f, r * omega)
        if not np.all(np.isfinite(vals)):
            raise ValueError("integrand produced non-finite values")
        return float(r ** (self.N + self.a) * (w @ vals))

    def thin_ball_integral(self, f, r: float) -> float:
        """Unweighted integral of f over the thin ball B_r' (N <= 2)."""
        idx = self.radius_index(r)
        x, w = self._thin_rule(idx)
        vals = _trace_values(f, x)
        if not np.all(np.isfinite(vals)):
            raise ValueError("integrand produced non-finite values")
        return float(w @ vals)

    def thin_sphere_integral(self, f, r: float) -> float:
        """Integral of f over the thin-ball boundary (two points for N=1)."""
        self.radius_index(r)
        if self.N == 1:
            x = np.array([[-r], [r]])
            return float(np.sum(_trace_values(f, x)))
        if self.N == 2:
            x, w = _circle_rule(r, self.angle_edges, self.panel_order)
            return float(w @ _trace_values(f, x))
        raise NotImplementedError("thin-sphere integrals implemented for N <= 2")

    def _thin_rule(self, idx: int):
        key = ("thin", idx)
        if key not in self._shell_node_cache:
            if self.N == 1:
                xs, ws = [], []
                gx, gw = _leggauss(self.panel_order)
                for i in range(idx):
                    lo, hi = self.radii[i], self.radii[i + 1]
                    n = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gx
                    w = 0.5 * (hi - lo) * gw
                    xs.extend([n, -n])
                    ws.extend([w, w])
                x = np.concatenate(xs)[:, None]
                w = np.concatenate(ws)
            elif self.N == 2:
                rho, wr = [], []
                gx, gw = _leggauss(self.panel_order)
                for i in range(idx):
                    lo, hi = self.radii[i], self.radii[i + 1]
                    n = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gx
                    rho.append(n)
                    wr.append(0.5 * (hi - lo) * gw * n)  # polar Jacobian
                rho = np.concatenate(rho)
                wr = np.concatenate(wr)
                alpha, wa = _disk_angle_rule(self.angle_edges, self.panel_order)
                x = np.stack(
                    [np.multiply.outer(rho, np.cos(alpha)).ravel(),
                     np.multiply.outer(rho, np.sin(alpha)).ravel()], axis=1)
                w = np.multiply.outer(wr, wa).ravel()
            else:
                raise NotImplementedError("thin-ball integrals implemented for N <= 2")
            self._shell_node_cache[key] = (x, w)
        return self._shell_node_cache[key]


def _disk_angle_rule(theta_edges: np.ndarray, order: int):
    """Full-angle rule on [-pi, pi] built from the two trace faces."""
    gx, gw = _leggauss(order)
    nodes, wts = [], []
    for lo, hi in zip(theta_edges[:-1], theta_edges[1:]):
        n = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gx
        w = 0.5 * (hi - lo) * gw
        nodes.extend([n, -n])
        wts.extend([w, w])
    return np.concatenate(nodes), np.concatenate(wts)


def _circle_rule(r: float, theta_edges: np.ndarray, order: int):
    alpha, wa = _disk_angle_rule(theta_edges, order)
    x = np.stack([r * np.cos(alpha), r * np.sin(alpha)], axis=1)
    return x, wa * r


def build_half_ball_mesh(N: int, radial_levels: int, angular_resolution: int,
                         grading_exponent: float = 2.0, *, a: float = 0.0,
                         panel_order: int | None = None) -> QuadratureMesh:
    """Solver-grade mesh on the unit half-ball.

    Radial nodes are graded toward the origin as (i/M)^grading to resolve
    the small scales the blow-up diagnostics sweep through.
    """
    if N not in (1, 2):
        raise ValueError("solver meshes support N in {1, 2}, got %r" % N)
    if radial_levels < 4:
        raise ValueError("need at least 4 radial levels")
    if angular_resolution < 4:
        raise ValueError("need at least 4 angular cells")
    if not np.isfinite(grading_exponent) or grading_exponent <= 0:
        raise ValueError("grading exponent must be finite and positive")
    if panel_order is None:
        panel_order = 12 if N == 1 else 8
    radii = (np.arange(radial_levels + 1) / radial_levels) ** grading_exponent
    return QuadratureMesh(N, a, radii, angular_resolution, panel_order, grading_exponent)


# ----------------------------------------------------------------------
# Centered rules for the functional sweeps (arbitrary center and radius)
# ----------------------------------------------------------------------

def _angles_to_unit_points(N: int, angle_nodes: list[np.ndarray]) -> np.ndarray:
    grids = np.meshgrid(*angle_nodes, indexing="ij")
    shape = grids[0].shape
    pts = np.empty(shape + (N + 1,))
    sin_prod = np.ones(shape)
    for d in range(N):
        pts[..., d] = sin_prod * np.cos(grids[d])
        sin_prod = sin_prod * np.sin(grids[d])
    pts[..., N] = sin_prod
    return pts.reshape(-1, N + 1)


def _tensor_surface(N: int, exponents, edges: np.ndarray, order: int):
    """Half-sphere rule for the weight prod_d sin(theta_d)^exponents[d].

    End panels are geometrically refined toward the weight-degenerate ends
    so bounded algebraic singularities of the integrand (the generic trace
    behavior of solutions) are resolved, not just polynomial ones.
    """
    node_lists, weight_lists = [], []
    for A in exponents:
        nodes, wts = [], []
        last = len(edges) - 2
        for i in range(len(edges) - 1):
            lo, hi = edges[i], edges[i + 1]
            singular = "left" if i == 0 else ("right" if i == last else None)
            rule = angular_subdivided_rule(A, lo, hi, order, singular)
            nodes.append(rule.nodes)
            wts.append(rule.weights)
        node_lists.append(np.concatenate(nodes))
        weight_lists.append(np.concatenate(wts))
    pts = _angles_to_unit_points(N, node_lists)
    w = weight_lists[0]
    for wl in weight_lists[1:]:
        w = np.multiply.outer(w, wl)
    return pts, w.reshape(-1)


class BallRules:
    """Translatable/scalable quadrature for balls centered at thin-space points.

    A unit pattern (graded shells times angular panels) is built once; balls
    at (x0, r) reuse it through the exact scaling of the weighted measure,
    r^(N+1+a) for volumes and r^(N+a) for spheres.  A dual pattern with the
    reciprocal weight y^-a backs the split integration of gradient terms:
    the singular y-derivative enters only through the regular combination
    y^a u_y, integrated against y^-a.
    """

    def __init__(self, N: int, a: float, shells: int = 12, angular_cells: int = 12,
                 order: int = 10, grading: float = 2.0):
        self.N, self.a = int(N), float(a)
        self.shells = int(shells)
        self.order = int(order)
        radii = (np.arange(shells + 1) / shells) ** grading
        self.pattern_radii = radii
        edges = np.linspace(0.0, np.pi, angular_cells + 1)
        self._edges = edges
        expo_primal = [(N - d) + a for d in range(1, N + 1)]
        expo_dual = [(N - d) - a for d in range(1, N + 1)]
        self._sphere_pts, self._sphere_w = _tensor_surface(N, expo_primal, edges, order)
        self._sphere_pts_d, self._sphere_w_d = _tensor_surface(N, expo_dual, edges, order)
        self._ball_pts, self._ball_w = self._assemble_ball(radii, N + a,
                                                           self._sphere_pts, self._sphere_w)
        self._ball_pts_d, self._ball_w_d = self._assemble_ball(radii, N - a,
                                                               self._sphere_pts_d,
                                                               self._sphere_w_d)
        if N <= 2:
            self._thin_x, self._thin_w = self._thin_pattern(radii, edges, order)

    def _assemble_ball(self, radii, c, omega, w_ang):
        pts, wts = [], []
        for i in range(len(radii) - 1):
            rr = radial_shell_rule(radii[i], radii[i + 1], c, self.order)
            pts.append((rr.nodes[:, None, None] * omega[None, :, :]).reshape(-1, self.N + 1))
            wts.append((rr.weights[:, None] * w_ang[None, :]).reshape(-1))
        return np.concatenate(pts), np.concatenate(wts)

    def _thin_pattern(self, radii, edges, order):
        gx, gw = _leggauss(order)
        rho, wr = [], []
        for i in range(len(radii) - 1):
            lo, hi = radii[i], radii[i + 1]
            n = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gx
            rho.append(n)
            wr.append(0.5 * (hi - lo) * gw * (n if self.N == 2 else 1.0))
        rho = np.concatenate(rho)
        wr = np.concatenate(wr)
        if self.N == 1:
            return np.concatenate([-rho, rho])[:, None], np.concatenate([wr, wr])
        if self.N == 2:
            alpha, wa = _disk_angle_rule(edges, order)
            x = np.stack([np.multiply.outer(rho, np.cos(alpha)).ravel(),
                          np.multiply.outer(rho, np.sin(alpha)).ravel()], axis=1)
            return x, np.multiply.outer(wr, wa).ravel()
        raise NotImplementedError("thin-ball patterns implemented for N <= 2")

    def _lift(self, x0) -> np.ndarray:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if x0.shape != (self.N,):
            raise ValueError("center must be a thin-space point with %d coordinates" % self.N)
        return np.concatenate([x0, [0.0]])

    def ball(self, x0, r: float):
        z0 = self._lift(x0)
        return z0 + r * self._ball_pts, r ** (self.N + 1 + self.a) * self._ball_w

    def ball_dual(self, x0, r: float):
        """Nodes/weights for integrals of y^-a * f over the ball."""
        z0 = self._lift(x0)
        return z0 + r * self._ball_pts_d, r ** (self.N + 1 - self.a) * self._ball_w_d

    def sphere(self, x0, r: float):
        z0 = self._lift(x0)
        return z0 + r * self._sphere_pts, r ** (self.N + self.a) * self._sphere_w, self._sphere_pts

    def sphere_dual(self, x0, r: float):
        z0 = self._lift(x0)
        return (z0 + r * self._sphere_pts_d, r ** (self.N - self.a) * self._sphere_w_d,
                self._sphere_pts_d)

    def thin(self, x0, r: float):
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        return x0 + r * self._thin_x, r ** self.N * self._thin_w

    def thin_boundary(self, x0, r: float):
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if self.N == 1:
            return x0 + np.array([[-r], [r]]), np.ones(2)
        x, w = _circle_rule(1.0, self._edges, self.order)
        return x0 + r * x, r * w
