"""Energy minimization for the two-phase boundary-penalized problem.

The continuous problem: minimize

    J(v) = 1/2 * int_{B_1^+} y^a |grad v|^2
         + 1/p * int_{B_1'} (lam_minus (v^-)^p + lam_plus (v^+)^p)

over fields matching the Dirichlet datum g on the spherical boundary.  The
discrete space is a tensor product of hat functions: linear in r, and linear
in the harmonic angular coordinate of each weight-degenerate angle (so the
y^(1-a)-type trace profiles are representable).  The boundary nonlinearity
has a Lipschitz derivative for p >= 2, which makes the damped (semismooth)
Newton iteration on the strictly convex discrete energy globally reliable.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import (
    QuadratureMesh,
    Rule1D,
    _leggauss,
    angular_subdivided_rule,
    power_moment,
    weighted_angle_primitive,
)
from .fields import Field, PositivePartField

__all__ = [
    "ProblemSpec",
    "SolutionField",
    "solve",
    "weak_residual",
    "energy",
    "check_max_principles",
    "check_mean_value",
    "fornberg_weights",
]


# ----------------------------------------------------------------------
# Problem data
# ----------------------------------------------------------------------

@dataclass
class ProblemSpec:
    """One instance of the boundary value problem."""

    N: int
    a: float
    p: float
    lam_minus: float
    lam_plus: float
    g: Field

    def __post_init__(self):
        if self.N not in (1, 2):
            raise ValueError("solver supports N in {1, 2}")
        if not (-1.0 < self.a < 1.0):
            raise ValueError("weight exponent a must lie in (-1, 1)")
        if self.p < 2.0:
            raise ValueError(
                "exponent p=%g rejected: the superlinear regime requires p >= 2" % self.p)
        if self.lam_minus < 0 or self.lam_plus < 0:
            raise ValueError("phase coefficients must be nonnegative")

    @property
    def s(self) -> float:
        """Order of the underlying fractional operator, s = (1-a)/2."""
        return 0.5 * (1.0 - self.a)

    def reaction(self, t: np.ndarray) -> np.ndarray:
        """h'(t) = lam_plus (t^+)^(p-1) - lam_minus (t^-)^(p-1)."""
        tp = np.maximum(t, 0.0)
        tm = np.maximum(-t, 0.0)
        if self.p == 2.0:
            return self.lam_plus * tp - self.lam_minus * tm
        return self.lam_plus * tp ** (self.p - 1.0) - self.lam_minus * tm ** (self.p - 1.0)

    def reaction_weight(self, t: np.ndarray) -> np.ndarray:
        """h''(t) = (p-1)[lam_plus (t^+)^(p-2) + lam_minus (t^-)^(p-2)] a.e."""
        tp = np.maximum(t, 0.0)
        tm = np.maximum(-t, 0.0)
        if self.p == 2.0:
            return self.lam_plus * (t > 0) + self.lam_minus * (t < 0) * 1.0
        q = self.p - 2.0
        return (self.p - 1.0) * (self.lam_plus * tp ** q + self.lam_minus * tm ** q)

    def potential(self, t: np.ndarray) -> np.ndarray:
        """F(t) = lam_minus (t^-)^p + lam_plus (t^+)^p."""
        tp = np.maximum(t, 0.0)
        tm = np.maximum(-t, 0.0)
        return self.lam_minus * tm ** self.p + self.lam_plus * tp ** self.p


# ----------------------------------------------------------------------
# 1D factor integrals
# ----------------------------------------------------------------------

def _radial_stiff(A, B, c):
    v = power_moment(A, B, c) / (B - A) ** 2
    return np.array([[v, -v], [-v, v]])


def _radial_mass(A, B, c):
    h2 = (B - A) ** 2
    p0 = power_moment(A, B, c)
    p1 = power_moment(A, B, c + 1.0)
    p2 = power_moment(A, B, c + 2.0)
    m00 = (B * B * p0 - 2.0 * B * p1 + p2) / h2
    m01 = (-A * B * p0 + (A + B) * p1 - p2) / h2
    m11 = (p2 - 2.0 * A * p1 + A * A * p0) / h2
    return np.array([[m00, m01], [m01, m11]])


def _hat_rule_matrix(rule: Rule1D, lo, hi, primitive=None):
    """2x2 mass factor for the two cell shape functions under a 1D rule.

    `primitive` maps the coordinate to the harmonic coordinate; None means
    plain linear shape functions.
    """
    if primitive is None:
        lam = (rule.nodes - lo) / (hi - lo)
    else:
        s0, s1 = primitive(lo), primitive(hi)
        lam = (primitive(rule.nodes) - s0) / (s1 - s0)
    shapes = np.stack([1.0 - lam, lam])
    return shapes * rule.weights @ shapes.T


# ----------------------------------------------------------------------
# Discretization cache
# ----------------------------------------------------------------------

class Discretization:
    """Tensor hat-function space on a polar mesh, with assembled stiffness."""

    def __init__(self, mesh: QuadratureMesh):
        if mesh.N not in (1, 2):
            raise ValueError("solver meshes support N in {1, 2}")
        self.mesh = mesh
        self.N, self.a = mesh.N, mesh.a
        self.radii = mesh.radii
        self.M = mesh.levels
        self.n_ang = mesh.n_ang
        self.theta = mesh.angle_edges
        self.s_tab = weighted_angle_primitive(self.theta, self.a)
        if self.N == 1:
            self._build_1d()
        else:
            self._build_2d()
        self._build_trace()
        self.K = self.K.tocsr()
        self.free = np.setdiff1d(np.arange(self.ndof), self.dirichlet)
        self.Kdiag = np.maximum(self.K.diagonal(), 1e-300)

    # -- DOF maps -------------------------------------------------------
    def dof1(self, i, j):
        i, j = np.asarray(i), np.asarray(j)
        return np.where(i == 0, 0, 1 + (i - 1) * (self.n_ang + 1) + j)

    def dof2(self, i, j, l):
        i, j, l = np.asarray(i), np.asarray(j), np.asarray(l)
        ring = 2 + (self.n_ang - 1) * (self.n_ang + 1)
        base = 1 + (i - 1) * ring
        north = base
        south = base + 1 + (self.n_ang - 1) * (self.n_ang + 1)
        interior = base + 1 + (j - 1) * (self.n_ang + 1) + l
        out = np.where(j == 0, north, np.where(j == self.n_ang, south, interior))
        return np.where(i == 0, 0, out)

    # -- assembly ---------------------------------------------------------
    def _build_1d(self):
        M, n, a = self.M, self.n_ang, self.a
        self.ndof = 1 + M * (n + 1)
        Sr = np.zeros((M, 2, 2))
        Gr = np.zeros((M, 2, 2))
        for i in range(M):
            A, B = self.radii[i], self.radii[i + 1]
            Sr[i] = _radial_stiff(A, B, 1.0 + a)
            if i == 0:
                Gr[i, 1, 1] = power_moment(0.0, B, a + 1.0) / B ** 2
            else:
                Gr[i] = _radial_mass(A, B, a - 1.0)
        Tm = np.zeros((n, 2, 2))
        Ts = np.zeros((n, 2, 2))
        prim = lambda t: weighted_angle_primitive(t, a)
        for j in range(n):
            lo, hi = self.theta[j], self.theta[j + 1]
            singular = "left" if j == 0 else ("right" if j == n - 1 else None)
            rule = angular_subdivided_rule(a, lo, hi, self.mesh.panel_order, singular)
            Tm[j] = _hat_rule_matrix(rule, lo, hi, prim)
            ds = self.s_tab[j + 1] - self.s_tab[j]
            Ts[j] = np.array([[1.0, -1.0], [-1.0, 1.0]]) / ds
        loc = (np.einsum("iab,jcd->ijacbd", Sr, Tm)
               + np.einsum("iab,jcd->ijacbd", Gr, Ts)).reshape(M, n, 4, 4)
        ii, jj = np.meshgrid(np.arange(1, M + 1), np.arange(1, n + 1), indexing="ij")
        corners = [self.dof1(ii - 1 + da, jj - 1 + db)
                   for da in (0, 1) for db in (0, 1)]
        dofs = np.stack(corners, axis=-1).reshape(M * n, 4)
        vals = loc.reshape(M * n, 4, 4)
        rows = np.repeat(dofs, 4, axis=1).ravel()
        cols = np.tile(dofs, (1, 4)).ravel()
        self.K = sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(self.ndof, self.ndof))
        self.dirichlet = np.unique(self.dof1(np.full(n + 1, M), np.arange(n + 1)))
        self.boundary_points = np.stack(
            [np.cos(self.theta), np.sin(self.theta)], axis=1)
        self._factors = dict(Sr=Sr, Gr=Gr, Tm=Tm, Ts=Ts)

    def _build_2d(self):
        M, n, a = self.M, self.n_ang, self.a
        ring = 2 + (n - 1) * (n + 1)
        self.ndof = 1 + M * ring
        Sr = np.zeros((M, 2, 2))
        Gr = np.zeros((M, 2, 2))
        for i in range(M):
            A, B = self.radii[i], self.radii[i + 1]
            Sr[i] = _radial_stiff(A, B, 2.0 + a)
            if i == 0:
                Gr[i, 1, 1] = power_moment(0.0, B, a + 2.0) / B ** 2
            else:
                Gr[i] = _radial_mass(A, B, a)
        # theta carries sin^(1+a); the 1/sin^2 factor of the phi-term is
        # integrable against it after the pole collapse removes the
        # offending shape pair.
        Tm = np.zeros((n, 2, 2))
        Ts = np.zeros((n, 2, 2))
        Tphi = np.zeros((n, 2, 2))
        for j in range(n):
            lo, hi = self.theta[j], self.theta[j + 1]
            rules = self.mesh._ang_rules[0][j]
            lam = (rules.nodes - lo) / (hi - lo)
            shapes = np.stack([1.0 - lam, lam])
            Tm[j] = shapes * rules.weights @ shapes.T
            Ts[j] = np.array([[1.0, -1.0], [-1.0, 1.0]]) * (rules.weights.sum() / (hi - lo) ** 2)
            w_over_sin2 = rules.weights / np.sin(rules.nodes) ** 2
            Tphi[j] = shapes * w_over_sin2 @ shapes.T
            if j == 0:
                Tphi[j][0, :] = 0.0
                Tphi[j][:, 0] = 0.0
            if j == n - 1:
                Tphi[j][1, :] = 0.0
                Tphi[j][:, 1] = 0.0
        Pm = np.zeros((n, 2, 2))
        Ps = np.zeros((n, 2, 2))
        prim = lambda t: weighted_angle_primitive(t, a)
        for l in range(n):
            lo, hi = self.theta[l], self.theta[l + 1]
            singular = "left" if l == 0 else ("right" if l == n - 1 else None)
            rule = angular_subdivided_rule(a, lo, hi, self.mesh.panel_order, singular)
            Pm[l] = _hat_rule_matrix(rule, lo, hi, prim)
            ds = self.s_tab[l + 1] - self.s_tab[l]
            Ps[l] = np.array([[1.0, -1.0], [-1.0, 1.0]]) / ds
        loc = (np.einsum("iab,jcd,lef->ijlacebdf", Sr, Tm, Pm)
               + np.einsum("iab,jcd,lef->ijlacebdf", Gr, Ts, Pm)
               + np.einsum("iab,jcd,lef->ijlacebdf", Gr, Tphi, Ps)
               ).reshape(M, n, n, 8, 8)
        ii, jj, ll = np.meshgrid(np.arange(1, M + 1), np.arange(1, n + 1),
                                 np.arange(1, n + 1), indexing="ij")
        corners = [self.dof2(ii - 1 + da, jj - 1 + db, ll - 1 + dc)
                   for da in (0, 1) for db in (0, 1) for dc in (0, 1)]
        dofs = np.stack(corners, axis=-1).reshape(-1, 8)
        vals = loc.reshape(-1, 8, 8)
        rows = np.repeat(dofs, 8, axis=1).ravel()
        cols = np.tile(dofs, (1, 8)).ravel()
        self.K = sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(self.ndof, self.ndof))
        jj, ll = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        self.dirichlet = np.unique(self.dof2(np.full_like(jj, M), jj, ll))
        th, ph = self.theta[jj.ravel()], self.theta[ll.ravel()]
        pts = np.stack([np.cos(th), np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph)], axis=1)
        # representative coordinates per Dirichlet dof
        order = self.dof2(np.full_like(jj, M), jj, ll).ravel()
        rep = {}
        for d, pt in zip(order, pts):
            rep.setdefault(int(d), pt)
        self.boundary_points = np.stack([rep[int(d)] for d in self.dirichlet])
        self._factors = dict(Sr=Sr, Gr=Gr, Tm=Tm, Ts=Ts, Tphi=Tphi, Pm=Pm, Ps=Ps)

    def _build_trace(self):
        """Cells, quadrature and shape tables for the thin-space integrals."""
        gx, gw = _leggauss(self.mesh.panel_order)
        xi = 0.5 * (gx + 1.0)
        if self.N == 1:
            dofs, wq, xq = [], [], []
            for side, j in ((1.0, 0), (-1.0, self.n_ang)):
                for i in range(1, self.M + 1):
                    A, B = self.radii[i - 1], self.radii[i]
                    dofs.append([self.dof1(i - 1, j), self.dof1(i, j)])
                    wq.append(0.5 * (B - A) * gw)
                    xq.append(side * (A + (B - A) * xi))
            self.tr_dofs = np.array(dofs)
            self.tr_w = np.array(wq)
            self.tr_x = np.array(xq)[:, :, None]
            self.tr_shapes = np.stack([1.0 - xi, xi], axis=1)  # (Q, 2)
        else:
            q = len(xi)
            shp = np.stack([
                np.outer(1.0 - xi, 1.0 - xi).ravel(),
                np.outer(1.0 - xi, xi).ravel(),
                np.outer(xi, 1.0 - xi).ravel(),
                np.outer(xi, xi).ravel(),
            ], axis=1)  # (Q^2, 4) order: (i-lo,j-lo),(i-lo,j-hi),(i-hi,j-lo),(i-hi,j-hi)
            dofs, wq, xq = [], [], []
            for l, sgn in ((0, 1.0), (self.n_ang, -1.0)):
                for i in range(1, self.M + 1):
                    for j in range(1, self.n_ang + 1):
                        A, B = self.radii[i - 1], self.radii[i]
                        t0, t1 = self.theta[j - 1], self.theta[j]
                        rho = A + (B - A) * xi
                        th = t0 + (t1 - t0) * xi
                        dofs.append([self.dof2(i - 1, j - 1, l), self.dof2(i - 1, j, l),
                                     self.dof2(i, j - 1, l), self.dof2(i, j, l)])
                        w2 = np.outer(0.5 * (B - A) * gw * rho, 0.5 * (t1 - t0) * gw).ravel()
                        wq.append(w2)
                        rr, tt = np.meshgrid(rho, th, indexing="ij")
                        xq.append(np.stack([(rr * np.cos(tt)).ravel(),
                                            sgn * (rr * np.sin(tt)).ravel()], axis=1))
            self.tr_dofs = np.array(dofs)
            self.tr_w = np.array(wq)
            self.tr_x = np.array(xq)
            self.tr_shapes = shp

    # -- nonlinear boundary terms ----------------------------------------
    def trace_values_q(self, u):
        return u[self.tr_dofs] @ self.tr_shapes.T  # (C, Q)

    def boundary_gradient(self, spec: ProblemSpec, u):
        uq = self.trace_values_q(u)
        dens = spec.reaction(uq) * self.tr_w
        out = np.zeros(self.ndof)
        np.add.at(out, self.tr_dofs, dens @ self.tr_shapes)
        return out

    def boundary_hessian(self, spec: ProblemSpec, u):
        uq = self.trace_values_q(u)
        dens = spec.reaction_weight(uq) * self.tr_w  # (C, Q)
        nb = self.tr_shapes.shape[1]
        local = np.einsum("cq,qa,qb->cab", dens, self.tr_shapes, self.tr_shapes)
        rows = np.repeat(self.tr_dofs, nb, axis=1).ravel()
        cols = np.tile(self.tr_dofs, (1, nb)).ravel()
        return sp.coo_matrix((local.ravel(), (rows, cols)),
                             shape=(self.ndof, self.ndof)).tocsr()

    def boundary_energy(self, spec: ProblemSpec, u):
        uq = self.trace_values_q(u)
        return float(np.sum(spec.potential(uq) * self.tr_w)) / spec.p

    # -- node coordinates (representative point per dof) -----------------
    def node_coordinates(self):
        pts = np.zeros((self.ndof, self.N + 1))
        if self.N == 1:
            for i in range(1, self.M + 1):
                r = self.radii[i]
                d = self.dof1(np.full(self.n_ang + 1, i), np.arange(self.n_ang + 1))
                pts[d, 0] = r * np.cos(self.theta)
                pts[d, 1] = r * np.sin(self.theta)
        else:
            jj, ll = np.meshgrid(np.arange(self.n_ang + 1), np.arange(self.n_ang + 1),
                                 indexing="ij")
            th, ph = self.theta[jj], self.theta[ll]
            om = np.stack([np.cos(th), np.sin(th) * np.cos(ph),
                           np.sin(th) * np.sin(ph)], axis=-1).reshape(-1, 3)
            for i in range(1, self.M + 1):
                d = self.dof2(np.full(jj.size, i), jj.ravel(), ll.ravel())
                pts[d] = self.radii[i] * om
        return pts


_DISC_CACHE: dict[int, Discretization] = {}


def get_discretization(mesh: QuadratureMesh) -> Discretization:
    key = id(mesh)
    if key not in _DISC_CACHE:
        _DISC_CACHE[key] = Discretization(mesh)
    return _DISC_CACHE[key]


# ----------------------------------------------------------------------
# Solution field
# ----------------------------------------------------------------------

class SolutionField(Field):
    """Discrete minimizer with vectorized point evaluation."""

    def __init__(self, mesh: QuadratureMesh, spec: ProblemSpec, u: np.ndarray,
                 iterations: int, residual: float, converged: bool):
        self.mesh = mesh
        self.spec = spec
        self.N = mesh.N
        self.u = u
        self.iterations = iterations
        self.residual = residual
        self.converged = converged
        self.disc = get_discretization(mesh)
        self._trace_grad_cache = None

    # -- coordinates ------------------------------------------------------
    def _locate(self, pts):
        d = self.disc
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.linalg.norm(pts, axis=1)
        i = np.clip(np.searchsorted(d.radii, r, side="right") - 1, 0, d.M - 1)
        A, B = d.radii[i], d.radii[i + 1]
        xi = np.clip((r - A) / (B - A), 0.0, 1.0)
        return pts, r, i, xi

    def values(self, pts):
        d = self.disc
        pts, r, i, xi = self._locate(pts)
        if self.N == 1:
            theta = np.arctan2(pts[:, 1], pts[:, 0])
            theta = np.clip(theta, 0.0, np.pi)
            j = np.clip((theta / (np.pi / d.n_ang)).astype(int), 0, d.n_ang - 1)
            s0, s1 = d.s_tab[j], d.s_tab[j + 1]
            lam = np.clip((weighted_angle_primitive(theta, d.a) - s0) / (s1 - s0), 0.0, 1.0)
            v = self.u[d.dof1(i, j)] * (1 - xi) * (1 - lam)
            v += self.u[d.dof1(i, j + 1)] * (1 - xi) * lam
            v += self.u[d.dof1(i + 1, j)] * xi * (1 - lam)
            v += self.u[d.dof1(i + 1, j + 1)] * xi * lam
            return v
        rs = np.maximum(r, 1e-300)
        theta = np.arccos(np.clip(pts[:, 0] / rs, -1.0, 1.0))
        phi = np.arctan2(pts[:, 2], pts[:, 1])
        phi = np.clip(phi, 0.0, np.pi)
        dth = np.pi / d.n_ang
        j = np.clip((theta / dth).astype(int), 0, d.n_ang - 1)
        l = np.clip((phi / dth).astype(int), 0, d.n_ang - 1)
        eta = np.clip((theta - d.theta[j]) / dth, 0.0, 1.0)
        s0, s1 = d.s_tab[l], d.s_tab[l + 1]
        zeta = np.clip((weighted_angle_primitive(phi, d.a) - s0) / (s1 - s0), 0.0, 1.0)
        v = np.zeros(len(r))
        for da, wa in ((0, 1 - xi), (1, xi)):
            for db, wb in ((0, 1 - eta), (1, eta)):
                for dc, wc in ((0, 1 - zeta), (1, zeta)):
                    v += self.u[d.dof2(i + da, j + db, l + dc)] * wa * wb * wc
        return v

    def gradients(self, pts):
        d = self.disc
        pts, r, i, xi = self._locate(pts)
        A, B = d.radii[i], d.radii[i + 1]
        h = B - A
        rs = np.maximum(r, 1e-14)
        if self.N == 1:
            theta = np.clip(np.arctan2(pts[:, 1], pts[:, 0]), 0.0, np.pi)
            j = np.clip((theta / (np.pi / d.n_ang)).astype(int), 0, d.n_ang - 1)
            s0, s1 = d.s_tab[j], d.s_tab[j + 1]
            lam = np.clip((weighted_angle_primitive(theta, d.a) - s0) / (s1 - s0), 0.0, 1.0)
            v00 = self.u[d.dof1(i, j)]
            v01 = self.u[d.dof1(i, j + 1)]
            v10 = self.u[d.dof1(i + 1, j)]
            v11 = self.u[d.dof1(i + 1, j + 1)]
            ur = (-(1 - lam) * v00 - lam * v01 + (1 - lam) * v10 + lam * v11) / h
            ulam = (-(1 - xi) * v00 + (1 - xi) * v01 - xi * v10 + xi * v11)
            st = np.maximum(np.sin(theta), 1e-300)
            utheta = ulam * st ** (-d.a) / (s1 - s0)
            ct, snt = np.cos(theta), np.sin(theta)
            gx = ur * ct - utheta / rs * snt
            gy = ur * snt + utheta / rs * ct
            return np.stack([gx, gy], axis=1)
        theta = np.arccos(np.clip(pts[:, 0] / rs, -1.0, 1.0))
        phi = np.clip(np.arctan2(pts[:, 2], pts[:, 1]), 0.0, np.pi)
        dth = np.pi / d.n_ang
        j = np.clip((theta / dth).astype(int), 0, d.n_ang - 1)
        l = np.clip((phi / dth).astype(int), 0, d.n_ang - 1)
        eta = np.clip((theta - d.theta[j]) / dth, 0.0, 1.0)
        s0, s1 = d.s_tab[l], d.s_tab[l + 1]
        zeta = np.clip((weighted_angle_primitive(phi, d.a) - s0) / (s1 - s0), 0.0, 1.0)
        vals = np.empty((2, 2, 2, len(r)))
        for da in (0, 1):
            for db in (0, 1):
                for dc in (0, 1):
                    vals[da, db, dc] = self.u[d.dof2(i + da, j + db, l + dc)]
        wxi = np.stack([1 - xi, xi])
        weta = np.stack([1 - eta, eta])
        wzeta = np.stack([1 - zeta, zeta])
        dxi = np.stack([-np.ones_like(xi), np.ones_like(xi)])
        ur = np.einsum("aq,bq,cq,abcq->q", dxi, weta, wzeta, vals) / h
        ueta = np.einsum("aq,bq,cq,abcq->q", wxi, dxi, wzeta, vals)
        uzeta = np.einsum("aq,bq,cq,abcq->q", wxi, weta, dxi, vals)
        utheta = ueta / dth
        sphi = np.maximum(np.sin(phi), 1e-300)
        uphi = uzeta * sphi ** (-d.a) / (s1 - s0)
        st = np.maximum(np.sin(theta), 1e-14)
        ct, snt = np.cos(theta), np.sin(theta)
        cp, sp_ = np.cos(phi), np.sin(phi)
        e_r = np.stack([ct, snt * cp, snt * sp_], axis=1)
        e_t = np.stack([-snt, ct * cp, ct * sp_], axis=1)
        e_p = np.stack([np.zeros_like(cp), -sp_, cp], axis=1)
        return (ur[:, None] * e_r + (utheta / rs)[:, None] * e_t
                + (uphi / (rs * st))[:, None] * e_p)

    # -- trace structures --------------------------------------------------
    def trace_grid(self):
        """Structured grid of trace nodes: coordinates and nodal values."""
        d = self.disc
        if self.N == 1:
            x = np.concatenate([-d.radii[:0:-1], [0.0], d.radii[1:]])
            idx_neg = d.dof1(np.arange(d.M, 0, -1), np.full(d.M, d.n_ang))
            idx_pos = d.dof1(np.arange(1, d.M + 1), np.zeros(d.M, dtype=int))
            vals = np.concatenate([self.u[idx_neg], [self.u[0]], self.u[idx_pos]])
            return x[:, None], vals
        # polar grid: angles from both faces, alpha in (-pi, pi]
        alphas = np.concatenate([-d.theta[:0:-1], d.theta])  # length 2n+1, includes -pi..pi
        rad = d.radii[1:]
        pts = []
        vals = []
        for i, r in enumerate(rad, start=1):
            for al in alphas:
                j = int(round(abs(al) / (np.pi / d.n_ang)))
                l = 0 if al >= 0 else d.n_ang
                dof = int(d.dof2(i, j, l))
                pts.append([r * math.cos(al), r * math.sin(al)])
                vals.append(self.u[dof])
        pts.append([0.0, 0.0])
        vals.append(self.u[0])
        return np.array(pts), np.array(vals)

    def trace_values(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pts = np.concatenate([x, np.zeros((x.shape[0], 1))], axis=1)
        return self.values(pts)

    def trace_gradients(self, x):
        """Thin-space gradient by differencing the trace nodal values.

        One-sided cubic stencils on the graded 1D grids; for N=2 the radial
        and angular derivatives are combined per node and interpolated.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = self.disc
        if self.N == 1:
            xs, vals = self.trace_grid()
            xs = xs[:, 0]
            out = np.empty((x.shape[0], 1))
            for q, xq in enumerate(x[:, 0]):
                out[q, 0] = _stencil_derivative(xs, vals, xq)
            return out
        return self._trace_gradient_2d(x)

    def _trace_gradient_2d(self, x):
        d = self.disc
        if self._trace_grad_cache is None:
            alphas = np.concatenate([-d.theta[:0:-1], d.theta])
            rad = d.radii
            nA = len(alphas)
            V = np.zeros((d.M + 1, nA))
            for i in range(1, d.M + 1):
                for m, al in enumerate(alphas):
                    j = int(round(abs(al) / (np.pi / d.n_ang)))
                    l = 0 if al >= 0 else d.n_ang
                    V[i, m] = self.u[int(d.dof2(i, j, l))]
            V[0, :] = self.u[0]
            dVr = np.zeros_like(V)
            dVa = np.zeros_like(V)
            for m in range(nA):
                for i in range(d.M + 1):
                    dVr[i, m] = _stencil_derivative(rad, V[:, m], rad[i])
            # periodic in alpha: wrap ends (alpha=-pi and alpha=pi coincide)
            per_a = np.concatenate([alphas[-4:-1] - 2 * np.pi, alphas, alphas[1:4] + 2 * np.pi])
            for i in range(1, d.M + 1):
                per_v = np.concatenate([V[i, -4:-1], V[i], V[i, 1:4]])
                for m in range(nA):
                    dVa[i, m] = _stencil_derivative(per_a, per_v, alphas[m])
            self._trace_grad_cache = (alphas, rad, dVr, dVa)
        alphas, rad, dVr, dVa = self._trace_grad_cache
        rho = np.linalg.norm(x, axis=1)
        al = np.arctan2(x[:, 1], x[:, 0])
        out = np.empty((x.shape[0], 2))
        for q in range(x.shape[0]):
            i = np.clip(np.searchsorted(rad, rho[q]) - 1, 0, len(rad) - 2)
            m = np.clip(np.searchsorted(alphas, al[q]) - 1, 0, len(alphas) - 2)
            wr = (rho[q] - rad[i]) / (rad[i + 1] - rad[i])
            wa = (al[q] - alphas[m]) / (alphas[m + 1] - alphas[m])
            ur = (1 - wr) * ((1 - wa) * dVr[i, m] + wa * dVr[i, m + 1]) \
                + wr * ((1 - wa) * dVr[i + 1, m] + wa * dVr[i + 1, m + 1])
            ua = (1 - wr) * ((1 - wa) * dVa[i, m] + wa * dVa[i, m + 1]) \
                + wr * ((1 - wa) * dVa[i + 1, m] + wa * dVa[i + 1, m + 1])
            rq = max(rho[q], rad[1] * 0.5)
            c, s_ = math.cos(al[q]), math.sin(al[q])
            out[q, 0] = ur * c - ua / rq * s_
            out[q, 1] = ur * s_ + ua / rq * c
        return out

    # -- serialization ----------------------------------------------------
    def save(self, prefix: str):
        """Write <prefix>.csv (coordinates, value, gradient) and <prefix>.json."""
        pts = self.disc.node_coordinates()
        # evaluate gradients slightly inside the domain; the weighted normal
        # derivative is genuinely unbounded on the trace for a > 0
        eps = 1e-9
        safe = pts.copy()
        rr = np.linalg.norm(safe, axis=1)
        safe *= np.where(rr > 0, np.minimum(1.0, (1.0 - eps) / np.maximum(rr, eps)), 1.0)[:, None]
        safe[:, -1] = np.maximum(safe[:, -1], eps)
        grads = self.gradients(safe)
        cols = [pts[:, k] for k in range(self.N + 1)] + [self.u] + \
               [grads[:, k] for k in range(self.N + 1)]
        header = (["x%d" % (k + 1) for k in range(self.N)] + ["y", "value"]
                  + ["g_x%d" % (k + 1) for k in range(self.N)] + ["g_y"])
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for row in zip(*cols):
            buf.write(",".join("%.17g" % v for v in row) + "\n")
        with open(prefix + ".csv", "w") as fh:
            fh.write(buf.getvalue())
        meta = {
            "N": self.N, "a": self.spec.a, "p": self.spec.p,
            "lambda_minus": self.spec.lam_minus, "lambda_plus": self.spec.lam_plus,
            "radial_levels": self.disc.M, "angular_resolution": self.disc.n_ang,
            "grading": self.mesh.grading, "panel_order": self.mesh.panel_order,
            "iterations": self.iterations, "residual": self.residual,
            "converged": self.converged, "ndof": int(self.disc.ndof),
        }
        with open(prefix + ".json", "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)


def fornberg_weights(x, x0, m):
    """Finite-difference weights for the m-th derivative at x0 on nodes x."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _stencil_derivative(xs, vals, x0, width=4):
    """Cubic local-stencil derivative on a nonuniform 1D grid."""
    n = len(xs)
    i = int(np.clip(np.searchsorted(xs, x0), 0, n - 1))
    lo = int(np.clip(i - width // 2, 0, n - width))
    sten = slice(lo, lo + width)
    w = fornberg_weights(xs[sten], x0, 1)
    return float(w @ vals[sten])


# ----------------------------------------------------------------------
# Driver
# ----------------------------------------------------------------------

def solve(spec: ProblemSpec, mesh: QuadratureMesh, tol: float = 1e-10,
          max_iter: int = 200) -> SolutionField:
    """Damped Newton minimization of the discrete energy."""
    if spec.N != mesh.N or spec.a != mesh.a:
        raise ValueError("problem and mesh disagree on (N, a)")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    d = get_discretization(mesh)
    gvals = np.asarray(spec.g.values(d.boundary_points), dtype=float)
    if not np.all(np.isfinite(gvals)):
        raise ValueError("boundary datum produced non-finite values")
    u = np.zeros(d.ndof)
    u[d.dirichlet] = gvals
    K = d.K
    free = d.free
    Kff = K[free][:, free].tocsc()
    lu = spla.splu(Kff)
    rhs0 = -(K @ u)[free]
    u[free] = lu.solve(rhs0)

    def dual_norm(R):
        return float(np.max(np.abs(R[free]) / np.sqrt(d.Kdiag[free])))

    def total_energy(v):
        return 0.5 * float(v @ (K @ v)) + d.boundary_energy(spec, v)

    iterations = 0
    res = dual_norm(K @ u + d.boundary_gradient(spec, u))
    if spec.lam_minus == 0.0 and spec.lam_plus == 0.0:
        return SolutionField(mesh, spec, u, 0, res, res <= max(tol, 1e-9))

    J = total_energy(u)
    converged = res <= tol
    while not converged and iterations < max_iter:
        iterations += 1
        R = K @ u + d.boundary_gradient(spec, u)
        H = (K + d.boundary_hessian(spec, u))[free][:, free].tocsc()
        try:
            delta = spla.splu(H).solve(-R[free])
        except RuntimeError:
            # near-singular Hessian: fall back to a preconditioned gradient step
            delta = -R[free] / d.Kdiag[free]
        t = 1.0
        for _ in range(40):
            trial = u.copy()
            trial[free] += t * delta
            Jt = total_energy(trial)
            if Jt <= J + 1e-14 * max(1.0, abs(J)):
                break
            t *= 0.5
        u = trial
        J = Jt
        res = dual_norm(K @ u + d.boundary_gradient(spec, u))
        converged = res <= tol
    return SolutionField(mesh, spec, u, iterations, res, converged)


# ----------------------------------------------------------------------
# Diagnostics
# ----------------------------------------------------------------------

def weak_residual(u, spec: ProblemSpec, mesh: QuadratureMesh) -> float:
    """max_i |a(u, phi_i) - b(u, phi_i)| / ||phi_i||_energy over the test basis.

    Discrete solutions on their own mesh are measured against the assembled
    operators; other fields are measured by quadrature of the weak form.
    """
    d = get_discretization(mesh)
    if isinstance(u, SolutionField) and u.mesh is mesh:
        R = d.K @ u.u + d.boundary_gradient(spec, u.u)
        return float(np.max(np.abs(R[d.free]) / np.sqrt(d.Kdiag[d.free])))
    R = _quadrature_residual(u, spec, mesh, d)
    return float(np.max(np.abs(R[d.free]) / np.sqrt(d.Kdiag[d.free])))


def _quadrature_residual(field, spec, mesh, d):
    """Weak-form residual vector of an arbitrary field (volume part by cells).

    The test-gradient term in the angle carries sin^(-a), which cancels the
    weight; it is integrated against a sin^(-a)-weighted rule with the
    regular bracket u_theta * sin^a, so fields with the generic
    theta^(-a)-type angular derivative lose no accuracy.
    """
    R = np.zeros(d.ndof)
    a = mesh.a
    if mesh.N != 1:
        raise NotImplementedError("quadrature residual implemented for N = 1")
    order = mesh.panel_order
    val_rules, der_rules = [], []
    for j in range(d.n_ang):
        lo, hi = d.theta[j], d.theta[j + 1]
        singular = "left" if j == 0 else ("right" if j == d.n_ang - 1 else None)
        val_rules.append(angular_subdivided_rule(a, lo, hi, order, singular))
        der_rules.append(angular_subdivided_rule(-a, lo, hi, order, singular))
    for i in range(d.M):
        rr = mesh._shell_rules[i]
        A, B = d.radii[i], d.radii[i + 1]
        xi = (rr.nodes - A) / (B - A)
        for j in range(d.n_ang):
            s0, s1 = d.s_tab[j], d.s_tab[j + 1]
            ds = s1 - s0
            # value term: u_r * phi_r against the weighted rule
            av = val_rules[j]
            rho = np.repeat(rr.nodes, len(av.nodes))
            th = np.tile(av.nodes, len(rr.nodes))
            pts = np.stack([rho * np.cos(th), rho * np.sin(th)], axis=1)
            w = (rr.weights[:, None] * av.weights[None, :]).ravel()
            grads = field.gradients(pts)
            gr = grads[:, 0] * np.cos(th) + grads[:, 1] * np.sin(th)
            lam = np.tile((weighted_angle_primitive(av.nodes, a) - s0) / ds, len(rr.nodes))
            for da in (0, 1):
                dLr = (1.0 if da else -1.0) / (B - A)
                for db in (0, 1):
                    Lt = lam if db else 1.0 - lam
                    dof = int(d.dof1(i + da, j + db))
                    R[dof] += float(np.sum(w * gr * dLr * Lt))
            # derivative term: (u_theta/r) * (phi_theta/r); weight cancels
            ad = der_rules[j]
            rho = np.repeat(rr.nodes, len(ad.nodes))
            th = np.tile(ad.nodes, len(rr.nodes))
            pts = np.stack([rho * np.cos(th), rho * np.sin(th)], axis=1)
            w = (rr.weights[:, None] * ad.weights[None, :]).ravel()
            grads = field.gradients(pts)
            gt = -grads[:, 0] * np.sin(th) + grads[:, 1] * np.cos(th)
            bracket = gt * np.sin(th) ** a / rho  # = u_theta sin^a / rho^2
            xiq = np.repeat(xi, len(ad.nodes))
            for da in (0, 1):
                if i == 0 and da == 0:
                    continue  # the collapsed pole function has no angular part
                Lr = xiq if da else 1.0 - xiq
                for db in (0, 1):
                    sgn = (1.0 if db else -1.0) / ds
                    dof = int(d.dof1(i + da, j + db))
                    R[dof] += float(np.sum(w * bracket * Lr * sgn))
    # boundary term with the field's own trace
    uq = field.trace_values(d.tr_x.reshape(-1, mesh.N)).reshape(d.tr_w.shape)
    dens = spec.reaction(uq) * d.tr_w
    np.add.at(R, d.tr_dofs, dens @ d.tr_shapes)
    return R


def energy(u, spec: ProblemSpec, mesh: QuadratureMesh) -> float:
    """J(u) = Dirichlet part + boundary potential."""
    d = get_discretization(mesh)
    if isinstance(u, SolutionField) and u.mesh is mesh:
        return 0.5 * float(u.u @ (d.K @ u.u)) + d.boundary_energy(spec, u.u)
    grad2 = lambda pts: np.sum(np.asarray(u.gradients(pts)) ** 2, axis=1)
    vol = mesh.weighted_volume_integral(grad2, 1.0)
    thin = mesh.thin_ball_integral(lambda x: spec.potential(u.trace_values(x)), 1.0)
    return 0.5 * vol + thin / spec.p


@dataclass
class MaxPrincipleReport:
    lower: float
    upper: float
    worst_low: float
    worst_high: float
    violations: int
    strict_sign: str | None
    strict_margin: float | None

    @property
    def ok(self) -> bool:
        return self.violations == 0


def check_max_principles(u: SolutionField, spec: ProblemSpec,
                         slack: float = 1e-9) -> MaxPrincipleReport:
    """Weak bound min{0, inf g} <= u <= max{0, sup g}, plus strict sign."""
    d = u.disc
    gvals = u.u[d.dirichlet]
    lower = min(0.0, float(gvals.min()))
    upper = max(0.0, float(gvals.max()))
    scale = max(1.0, float(np.abs(u.u).max()))
    low_viol = u.u < lower - slack * scale
    high_viol = u.u > upper + slack * scale
    interior = np.setdiff1d(np.arange(d.ndof), d.dirichlet)
    strict_sign = None
    strict_margin = None
    if gvals.size and gvals.min() >= 0.0 and gvals.max() > 0.0:
        strict_sign = "positive"
        strict_margin = float(u.u[interior].min())
    elif gvals.size and gvals.max() <= 0.0 and gvals.min() < 0.0:
        strict_sign = "negative"
        strict_margin = float(-u.u[interior].max())
    return MaxPrincipleReport(
        lower, upper,
        float((u.u - lower).min()), float((upper - u.u).min()),
        int(low_viol.sum() + high_viol.sum()), strict_sign, strict_margin)


@dataclass
class MeanValueReport:
    entries: list = field(default_factory=list)

    @property
    def worst_margin(self) -> float:
        return min(e["volume_margin"] for e in self.entries + [{"volume_margin": np.inf}])

    def ok(self, tol: float) -> bool:
        return all(e["volume_margin"] >= -tol and e["sphere_margin"] >= -tol
                   for e in self.entries)


def check_mean_value(v: Field, rules, centers, radii) -> MeanValueReport:
    """Weighted volume and sphere means dominate the center value for
    subharmonic fields; the means are quadrature-self-normalized."""
    rep = MeanValueReport()
    for x0 in centers:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if np.linalg.norm(x0) + max(radii) > 1.0 + 1e-12:
            raise ValueError("ball exits the domain at center %s" % x0)
        val = float(v.trace_values(x0[None, :])[0])
        for r in radii:
            pts, w = rules.ball(x0, r)
            vol_mean = float(w @ v.values(pts)) / float(w.sum())
            spts, sw, _ = rules.sphere(x0, r)
            sph_mean = float(sw @ v.values(spts)) / float(sw.sum())
            rep.entries.append({
                "center": x0.tolist(), "r": float(r), "value": val,
                "volume_mean": vol_mean, "sphere_mean": sph_mean,
                "volume_margin": vol_mean - val, "sphere_margin": sph_mean - val,
            })
    return rep


def positive_part(u: Field) -> PositivePartField:
    return PositivePartField(u, 1.0)


def negative_part(u: Field) -> PositivePartField:
    return PositivePartField(u, -1.0)
