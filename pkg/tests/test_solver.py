"""Variational solver: recovery, principles, residuals, both dimensions."""

import numpy as np
import pytest

from fblab import polynomials as ap
from fblab.domain import BallRules, build_half_ball_mesh
from fblab.fields import PolynomialField, exact_remark_solution
from fblab.solver import (
    ProblemSpec,
    check_max_principles,
    check_mean_value,
    energy,
    negative_part,
    positive_part,
    solve,
    weak_residual,
)

from conftest import constant_field, linear_field


def test_spec_validation():
    g = constant_field(1, 1.0)
    with pytest.raises(ValueError, match="p >= 2"):
        ProblemSpec(1, 0.0, 1.5, 1.0, 1.0, g)
    with pytest.raises(ValueError, match="weight exponent"):
        ProblemSpec(1, 1.2, 2.0, 1.0, 1.0, g)
    with pytest.raises(ValueError, match="nonnegative"):
        ProblemSpec(1, 0.0, 2.0, -1.0, 1.0, g)
    with pytest.raises(ValueError):
        ProblemSpec(3, 0.0, 2.0, 1.0, 1.0, g)
    assert ProblemSpec(1, 0.5, 2.0, 1.0, 1.0, g).s == pytest.approx(0.25)


@pytest.mark.parametrize("a", [-0.5, 0.0, 0.5])
def test_exact_solution_recovery(a):
    exact = exact_remark_solution(1, a)
    spec = ProblemSpec(1, a, 2.0, 1.0, 1.0, exact)
    mesh = build_half_ball_mesh(1, 32, 32, 1.0, a=a)
    u = solve(spec, mesh)
    pts = u.disc.node_coordinates()
    err = np.max(np.abs(u.values(pts) - exact.values(pts)))
    assert err < 8e-4


def test_mesh_refinement_halves_error():
    a = 0.5
    exact = exact_remark_solution(1, a)
    spec = ProblemSpec(1, a, 2.0, 1.0, 1.0, exact)
    errs = []
    for M in (16, 32):
        mesh = build_half_ball_mesh(1, M, M, 1.0, a=a)
        u = solve(spec, mesh)
        pts = u.disc.node_coordinates()
        errs.append(np.max(np.abs(u.values(pts) - exact.values(pts))))
    assert errs[0] / errs[1] >= 2.0


def test_zero_datum_gives_zero():
    spec = ProblemSpec(1, 0.3, 2.0, 1.0, 1.0, constant_field(1, 0.0))
    mesh = build_half_ball_mesh(1, 16, 16, 1.0, a=0.3)
    u = solve(spec, mesh)
    assert np.max(np.abs(u.u)) == 0.0


def test_positive_datum_bounds_and_sign(positive_setup):
    spec, mesh, u = positive_setup
    rep = check_max_principles(u, spec)
    assert rep.ok
    assert rep.strict_sign == "positive"
    assert rep.strict_margin > 0.0
    assert np.max(u.u) <= 1.0 + 1e-12


def test_negative_datum_sign():
    spec = ProblemSpec(1, 0.2, 2.0, 1.0, 1.0, constant_field(1, -1.0))
    mesh = build_half_ball_mesh(1, 16, 16, 1.0, a=0.2)
    u = solve(spec, mesh)
    rep = check_max_principles(u, spec)
    assert rep.ok and rep.strict_sign == "negative" and rep.strict_margin > 0.0


def test_sign_changing_datum_no_sign_conclusion():
    spec = ProblemSpec(1, 0.0, 2.0, 1.0, 1.0, linear_field(1))
    mesh = build_half_ball_mesh(1, 16, 16, 1.0, a=0.0)
    u = solve(spec, mesh)
    rep = check_max_principles(u, spec)
    assert rep.ok and rep.strict_sign is None


def test_general_exponent_newton():
    spec = ProblemSpec(1, 0.25, 3.0, 1.0, 2.0, constant_field(1, 1.0))
    mesh = build_half_ball_mesh(1, 24, 24, 1.5, a=0.25)
    u = solve(spec, mesh)
    assert u.converged and u.residual <= 1e-10
    assert check_max_principles(u, spec).ok


def test_discrete_weak_residual(exact_setup_a05):
    exact, spec, mesh, u = exact_setup_a05
    assert weak_residual(u, spec, mesh) <= 1e-10


def test_exact_field_weak_residual(exact_setup_a05):
    exact, spec, mesh, u = exact_setup_a05
    assert weak_residual(exact, spec, mesh) <= 1e-8


def test_zero_field_zero_residual():
    spec = ProblemSpec(1, 0.1, 2.0, 1.0, 1.0, constant_field(1, 0.0))
    mesh = build_half_ball_mesh(1, 12, 12, 1.0, a=0.1)
    assert weak_residual(constant_field(1, 0.0), spec, mesh) == 0.0


def test_polynomial_neumann_residual():
    # with both phase coefficients off, a weight-harmonic polynomial solves
    # the homogeneous-flux problem
    a = -0.3
    pf = PolynomialField(ap.basis(1, 2, a)[0])
    spec = ProblemSpec(1, a, 2.0, 0.0, 0.0, pf)
    mesh = build_half_ball_mesh(1, 16, 16, 1.0, a=a)
    assert weak_residual(pf, spec, mesh) <= 1e-9


def test_neumann_case_reproduces_polynomial():
    a = 0.35
    pk = ap.basis(1, 2, a)[0]
    pf = PolynomialField(pk)
    spec = ProblemSpec(1, a, 2.0, 0.0, 0.0, pf)
    mesh = build_half_ball_mesh(1, 32, 32, 1.0, a=a)
    u = solve(spec, mesh)
    pts = u.disc.node_coordinates()
    assert np.max(np.abs(u.values(pts) - pf.values(pts))) < 2e-3


def test_energy_examples(mesh16):
    spec = ProblemSpec(1, 0.0, 2.0, 0.0, 1.0, constant_field(1, 0.7))
    z = constant_field(1, 0.0)
    assert energy(z, spec, mesh16) == 0.0
    c = constant_field(1, 0.7)
    # gradient term vanishes; boundary term is c^2/p times the thin measure 2
    assert energy(c, spec, mesh16) == pytest.approx(0.7 ** 2, rel=1e-12)


def test_minimality_against_perturbations(positive_setup):
    spec, mesh, u = positive_setup
    J0 = energy(u, spec, mesh)
    rng = np.random.default_rng(11)
    d = u.disc
    for _ in range(20):
        phi = rng.normal(0.0, 0.05, size=d.ndof)
        phi[d.dirichlet] = 0.0
        from fblab.solver import SolutionField
        trial = SolutionField(mesh, spec, u.u + phi, 0, 0.0, True)
        assert energy(trial, spec, mesh) >= J0 - 1e-12


def test_energy_convexity_along_directions(positive_setup):
    spec, mesh, u = positive_setup
    rng = np.random.default_rng(5)
    d = u.disc
    from fblab.solver import SolutionField
    for _ in range(50):
        phi = rng.normal(0.0, 0.1, size=d.ndof)
        phi[d.dirichlet] = 0.0
        ts = np.linspace(-1.0, 1.0, 9)
        Js = []
        for t in ts:
            Js.append(energy(SolutionField(mesh, spec, u.u + t * phi, 0, 0.0, True),
                             spec, mesh))
        second = np.diff(Js, 2)
        assert np.min(second) >= -1e-10


def test_mean_value_constant_saturates(rules_a03):
    c = constant_field(1, 1.0)
    rep = check_mean_value(c, rules_a03, [[0.0], [0.3]], [0.1, 0.2])
    for e in rep.entries:
        assert e["volume_margin"] == pytest.approx(0.0, abs=1e-12)
        assert e["sphere_margin"] == pytest.approx(0.0, abs=1e-12)


def test_mean_value_solver_positive_part(positive_setup):
    spec, mesh, u = positive_setup
    rules = BallRules(1, 0.0)
    rep = check_mean_value(positive_part(u), rules, [[0.0], [0.3], [-0.3]], [0.1, 0.2])
    assert rep.ok(1e-6)
    repm = check_mean_value(negative_part(u), rules, [[0.0]], [0.2])
    assert repm.ok(1e-6)


def test_mean_value_superharmonic_flips(rules_a03):
    # -|x|^2 is superharmonic for the weighted operator: means sit below the value
    from fblab.fields import CallableField

    def val(pts):
        return -pts[:, 0] ** 2

    def grad(pts):
        g = np.zeros_like(pts)
        g[:, 0] = -2 * pts[:, 0]
        return g

    v = CallableField(1, val, grad)
    rep = check_mean_value(v, rules_a03, [[0.0], [0.2]], [0.1, 0.3])
    for e in rep.entries:
        assert e["volume_margin"] <= 1e-12
        assert e["sphere_margin"] <= 1e-12


def test_mean_value_geometry_guard(rules_a03):
    with pytest.raises(ValueError):
        check_mean_value(constant_field(1, 1.0), rules_a03, [[0.9]], [0.5])


def test_mean_value_property_of_weight_harmonic_fields(rules_a03):
    # harmonic extensions average exactly to their center value
    p = PolynomialField(ap.extend_from_trace(__import__("fblab.polyalg", fromlist=["Poly"]).Poly.monomial(1, (2,)), 0.3))
    rep = check_mean_value(p, rules_a03, [[0.0]], [0.2, 0.5])
    for e in rep.entries:
        assert e["volume_margin"] == pytest.approx(0.0, abs=1e-11)
        assert e["sphere_margin"] == pytest.approx(0.0, abs=1e-11)


class TestTwoTraceDimensions:
    def test_exact_recovery_2d(self):
        a = -0.3
        exact = exact_remark_solution(2, a)
        spec = ProblemSpec(2, a, 2.0, 1.0, 1.0, exact)
        mesh = build_half_ball_mesh(2, 12, 12, 1.0, a=a)
        u = solve(spec, mesh)
        pts = u.disc.node_coordinates()
        assert np.max(np.abs(u.values(pts) - exact.values(pts))) < 2e-2

    def test_odd_datum_gives_odd_solution(self):
        spec = ProblemSpec(2, 0.2, 2.0, 1.0, 1.0, linear_field(2))
        mesh = build_half_ball_mesh(2, 10, 10, 1.0, a=0.2)
        u = solve(spec, mesh)
        pts = np.array([[0.3, 0.2, 0.1], [0.5, -0.1, 0.3], [0.1, 0.6, 0.05]])
        flip = pts.copy()
        flip[:, 0] *= -1
        np.testing.assert_allclose(u.values(pts), -u.values(flip), atol=1e-12)

    def test_trace_gradient_recovery_2d(self):
        a = 0.4
        exact = exact_remark_solution(2, a)
        spec = ProblemSpec(2, a, 2.0, 1.0, 1.0, exact)
        mesh = build_half_ball_mesh(2, 14, 14, 1.0, a=a)
        u = solve(spec, mesh)
        q = np.array([[0.0, 0.0], [0.1, 0.3], [-0.2, -0.25]])
        tg = u.trace_gradients(q)
        np.testing.assert_allclose(tg[:, 0], 1 - a, rtol=2e-2)
        np.testing.assert_allclose(tg[:, 1], 0.0, atol=2e-2)


def test_serialization(tmp_path, positive_setup):
    spec, mesh, u = positive_setup
    prefix = str(tmp_path / "sol")
    u.save(prefix)
    import json
    meta = json.loads((tmp_path / "sol.json").read_text())
    assert meta["converged"] and meta["ndof"] == u.disc.ndof
    lines = (tmp_path / "sol.csv").read_text().strip().splitlines()
    assert len(lines) == u.disc.ndof + 1
    assert lines[0].split(",") == ["x1", "y", "value", "g_x1", "g_y"]
