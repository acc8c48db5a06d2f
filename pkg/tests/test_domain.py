"""Mesh construction and weight-exact quadrature."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from fblab import polynomials as ap
from fblab.domain import (
    BallRules,
    QuadratureMesh,
    angular_subdivided_rule,
    build_half_ball_mesh,
    weighted_angle_primitive,
)
from fblab.polyalg import Poly

ONE = lambda pts: np.ones(pts.shape[0])


def test_build_validation():
    with pytest.raises(ValueError):
        build_half_ball_mesh(3, 8, 8, 1.0)
    with pytest.raises(ValueError):
        build_half_ball_mesh(1, 3, 8, 1.0)
    with pytest.raises(ValueError):
        build_half_ball_mesh(1, 8, 3, 1.0)
    with pytest.raises(ValueError):
        build_half_ball_mesh(1, 8, 8, float("nan"))
    with pytest.raises(ValueError):
        build_half_ball_mesh(1, 8, 8, 1.0, a=1.5)


def test_grading_formula():
    m = build_half_ball_mesh(1, 16, 16, 2.0, a=0.0)
    np.testing.assert_allclose(m.radii, (np.arange(17) / 16.0) ** 2)
    u = build_half_ball_mesh(1, 16, 16, 1.0, a=0.0)
    np.testing.assert_allclose(u.radii, np.arange(17) / 16.0)
    m2 = build_half_ball_mesh(2, 8, 8, 1.5, a=0.0)
    assert m2.levels == 8 and m2.n_ang == 8


def test_half_disk_area_and_circumference(mesh16):
    assert mesh16.weighted_volume_integral(ONE, 1.0) == pytest.approx(math.pi / 2, rel=1e-12)
    assert mesh16.weighted_sphere_integral(ONE, 1.0) == pytest.approx(math.pi, rel=1e-12)


def test_half_disk_second_moment(mesh16):
    got = mesh16.weighted_volume_integral(lambda pts: pts[:, 1] ** 2, 1.0)
    assert got == pytest.approx(math.pi / 8, rel=1e-12)


def test_weighted_volume_against_adaptive_oracle():
    for a in (-0.5, 0.3, 0.5):
        m = build_half_ball_mesh(1, 16, 16, 2.0, a=a)
        radial, _ = quad(lambda r: r ** (1 + a), 0.0, 1.0)
        angular, _ = quad(lambda t: math.sin(t) ** a, 0.0, math.pi, points=[0.0, math.pi])
        assert m.weighted_volume_integral(ONE, 1.0) == pytest.approx(radial * angular, rel=1e-10)


def test_sine_weight_sphere_value():
    # a -> 1 limit case evaluated at a = 0.999...: instead check a = 0.5
    m = build_half_ball_mesh(1, 8, 8, 1.0, a=0.5)
    oracle, _ = quad(lambda t: math.sin(t) ** 0.5, 0.0, math.pi)
    assert m.weighted_sphere_integral(ONE, 1.0) == pytest.approx(oracle, rel=1e-12)


def test_thin_ball_examples(mesh16):
    f1 = lambda x: np.ones(x.shape[0])
    assert mesh16.thin_ball_integral(f1, 1.0) == pytest.approx(2.0, rel=1e-14)
    assert mesh16.thin_ball_integral(lambda x: x[:, 0] ** 2, 1.0) == pytest.approx(2.0 / 3, rel=1e-13)
    m2 = build_half_ball_mesh(2, 8, 8, 1.0, a=0.2)
    assert m2.thin_ball_integral(f1, 1.0) == pytest.approx(math.pi, rel=1e-12)


def test_additivity_of_shells():
    m = build_half_ball_mesh(1, 12, 12, 2.0, a=0.4)
    f = lambda pts: np.exp(pts[:, 0]) + pts[:, 1] ** 2
    total = m.weighted_volume_integral(f, 1.0)
    parts = sum(m.weighted_shell_integral(f, i) for i in range(m.levels))
    assert parts == pytest.approx(total, rel=1e-12)


def test_scaling_identity_at_quadrature_level():
    for a in (-0.5, 0.3):
        m = build_half_ball_mesh(1, 16, 16, 2.0, a=a)
        v1 = m.weighted_volume_integral(ONE, 1.0)
        for i in (4, 9, 13):
            r = m.radii[i]
            vr = m.weighted_volume_integral(ONE, r)
            assert vr == pytest.approx(r ** (2 + a) * v1, rel=1e-13)


def test_polynomial_exactness_vs_exact_moments():
    # quadrature against the closed-form weighted moments, to 1e-10 relative
    for N, a in ((1, -0.5), (1, 0.5), (2, 0.3)):
        m = build_half_ball_mesh(N, 8, 8, 1.5, a=a)
        b = ap.basis(N, 3, a)[0]
        q = b.as_poly() * b.as_poly()
        exact_s = ap.sphere_integral_poly(q, N, a, 1.0)
        got_s = m.weighted_sphere_integral(lambda pts: b.evaluate(pts) ** 2, 1.0)
        assert got_s == pytest.approx(exact_s, rel=1e-10)
        exact_v = ap.ball_integral_poly(q, N, a, 1.0)
        got_v = m.weighted_volume_integral(lambda pts: b.evaluate(pts) ** 2, 1.0)
        assert got_v == pytest.approx(exact_v, rel=1e-10)


def test_all_nodes_have_positive_height():
    m = build_half_ball_mesh(2, 6, 6, 1.0, a=-0.4)
    for i in range(m.levels):
        pts, w = m._shell_nodes(i)
        assert np.all(pts[:, 2] > 0.0)
        assert np.all(np.isfinite(w))


def test_non_grid_radius_rejected(mesh16):
    with pytest.raises(ValueError):
        mesh16.weighted_volume_integral(ONE, 0.123456)
    with pytest.raises(ValueError):
        mesh16.weighted_sphere_integral(ONE, 0.0)


def test_non_finite_integrand_rejected(mesh16):
    bad = lambda pts: np.full(pts.shape[0], np.nan)
    with pytest.raises(ValueError):
        mesh16.weighted_volume_integral(bad, 1.0)


def test_general_dimension_quadrature():
    radii = (np.arange(9) / 8.0) ** 1.5
    m = QuadratureMesh(3, 0.2, radii, 6, 8, 1.5)
    alpha = ap.ball_monomial_integral(3, 0.2, (0, 0, 0, 0))
    beta = ap.sphere_monomial_integral(3, 0.2, (0, 0, 0, 0))
    assert m.weighted_volume_integral(ONE, 1.0) == pytest.approx(alpha, rel=1e-12)
    assert m.weighted_sphere_integral(ONE, 1.0) == pytest.approx(beta, rel=1e-12)


def test_angle_primitive():
    th = np.array([0.2, 1.1, 2.5, math.pi])
    np.testing.assert_allclose(weighted_angle_primitive(th, 0.0), th, atol=1e-14)
    for a in (-0.5, 0.5):
        got = weighted_angle_primitive(1.3, a)
        oracle, _ = quad(lambda t: math.sin(t) ** (-a), 0.0, 1.3)
        assert got == pytest.approx(oracle, rel=1e-12)


def test_subdivided_rule_handles_singular_brackets():
    # integrand sin(t)^a * t^(1-a): bounded but nonsmooth at the left end
    a = 0.5
    rule = angular_subdivided_rule(a, 0.0, 0.4, 12, "left")
    got = float(rule.weights @ (rule.nodes ** (1 - a)))
    oracle, _ = quad(lambda t: math.sin(t) ** a * t ** (1 - a), 0.0, 0.4)
    assert got == pytest.approx(oracle, rel=1e-9)


class TestBallRules:
    def test_volume_and_translation(self):
        br = BallRules(1, 0.3)
        pts, w = br.ball(np.array([0.2]), 0.3)
        alpha = ap.ball_monomial_integral(1, 0.3, (0, 0))
        assert w.sum() == pytest.approx(0.3 ** 2.3 * alpha, rel=1e-12)
        assert (w @ pts[:, 0]) / w.sum() == pytest.approx(0.2, abs=1e-14)

    def test_sphere_scaling(self):
        br = BallRules(1, -0.4)
        _, sw, _ = br.sphere(np.array([0.0]), 0.5)
        beta = ap.sphere_monomial_integral(1, -0.4, (0, 0))
        assert sw.sum() == pytest.approx(0.5 ** 0.6 * beta, rel=1e-12)

    def test_dual_rules_reconstruct_weighted_gradient(self):
        # int y^a u_y^2 for u = y^(1-a) x: computed through (y^a u_y)^2 y^-a
        a = 0.5
        br = BallRules(1, a)
        pts, w = br.ball_dual(np.array([0.0]), 1.0)
        integrand = ((1 - a) * pts[:, 1] ** a * pts[:, 1] ** (-a) * pts[:, 0]) ** 2
        got = float(w @ integrand)
        # exact: (1-a)^2 int y^-a x^2 over the half ball
        exact = (1 - a) ** 2 * ap.ball_monomial_integral(1, -a, (2, 0))
        assert got == pytest.approx(exact, rel=1e-11)

    def test_thin_boundary(self):
        br1 = BallRules(1, 0.0)
        x, w = br1.thin_boundary(np.array([0.1]), 0.4)
        np.testing.assert_allclose(sorted(x[:, 0]), [-0.3, 0.5])
        br2 = BallRules(2, 0.0, angular_cells=8)
        x2, w2 = br2.thin_boundary(np.zeros(2), 0.5)
        assert w2.sum() == pytest.approx(2 * math.pi * 0.5, rel=1e-12)
