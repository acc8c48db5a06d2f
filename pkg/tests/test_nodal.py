"""Zero-set extraction, classification, stratification, box counting."""

import numpy as np
import pytest

from fblab import polynomials as ap
from fblab.domain import build_half_ball_mesh
from fblab.fields import PolynomialField, exact_remark_solution
from fblab.nodal import (
    REGULAR,
    SINGULAR,
    UNCLASSIFIED,
    aharmonic_from_even_poly,
    box_counting_dimension,
    classify_point,
    extract_nodal_set,
    extract_nodal_set_grid,
    stratify,
)
from fblab.polyalg import Poly
from fblab.solver import ProblemSpec, SolutionField, solve

from conftest import constant_field, linear_field

A = 0.3
SPEC0 = ProblemSpec(1, A, 2.0, 1.0, 1.0, constant_field(1, 1.0))


def make_psi(N, a):
    """Singular model field: the even quadratic profile in (x_N, y)."""
    q = ap.hypergeometric_polynomial_2d(2, a)
    tr = Poly.monomial(N, tuple(0 if i < N - 1 else 2 for i in range(N)),
                       q.layers[0].terms[(2,)])
    return PolynomialField(ap.extend_from_trace(tr, a))


def test_extraction_single_zero(exact_setup_a05):
    _, spec, mesh, u = exact_setup_a05
    ns = extract_nodal_set(u)
    assert len(ns.points) == 1
    cell = np.max(np.diff(np.sort(u.trace_grid()[0][:, 0])))
    assert abs(ns.points[0, 0]) <= cell


def test_extraction_positive_trace_empty(positive_setup):
    spec, mesh, u = positive_setup
    ns = extract_nodal_set(u)
    assert ns.empty


def test_extraction_rejects_identically_zero():
    spec = ProblemSpec(1, 0.2, 2.0, 1.0, 1.0, constant_field(1, 0.0))
    mesh = build_half_ball_mesh(1, 8, 8, 1.0, a=0.2)
    u = solve(spec, mesh)
    with pytest.raises(ValueError):
        extract_nodal_set(u)


def test_extraction_flags_plateau():
    # doctor a discrete field with a dead zone next to a genuine crossing
    spec = ProblemSpec(1, 0.0, 2.0, 1.0, 1.0, linear_field(1))
    mesh = build_half_ball_mesh(1, 16, 16, 1.0, a=0.0)
    u = solve(spec, mesh)
    v = u.u.copy()
    d = u.disc
    for i in range(4, 12):
        v[d.dof1(i, 0)] = 0.0  # zero plateau on part of the positive side
    doctored = SolutionField(mesh, spec, v, 0, 0.0, True)
    ns = extract_nodal_set(doctored)
    assert ns.artifacts > 0


def test_extraction_psi_band_branch():
    pf = make_psi(2, A)
    ns = extract_nodal_set_grid(pf, 2, 40)
    assert len(ns.points) > 10
    assert np.max(np.abs(ns.points[:, 1])) <= 2.0 / 40


def test_classify_regular_point(exact_setup_a05, rules_a05):
    exact, spec, mesh, u = exact_setup_a05
    ns = extract_nodal_set(u)
    c = classify_point(u, spec, ns.points[0], np.geomspace(0.02, 0.3, 8), rules_a05)
    assert c.kind == REGULAR and c.k == 1
    assert c.tests_agree
    assert c.gradient_norm == pytest.approx(0.5, rel=0.05)


def test_classify_psi_points():
    pf = make_psi(2, A)
    ns = extract_nodal_set_grid(pf, 2, 40)
    h = 2.0 / 40
    for x0 in ns.points[:8]:
        c = classify_point(pf, SPEC0, x0, resolution_scale=h)
        assert (c.kind, c.k, c.blowup_type, c.degeneracy) == (SINGULAR, 2, ap.Y_DEPENDENT, 1)


def test_classify_star_point():
    a = 0.4
    spec = ProblemSpec(2, a, 2.0, 1.0, 1.0, constant_field(2, 1.0))
    pf = PolynomialField(ap.extend_from_trace(Poly.monomial(2, (1, 1)), a))
    c = classify_point(pf, spec, np.array([0.0, 0.0]))
    assert (c.kind, c.k, c.blowup_type, c.degeneracy) == (SINGULAR, 2, ap.STAR, 0)


def test_stratify_all_regular(exact_setup_a05, rules_a05):
    _, spec, mesh, u = exact_setup_a05
    ns = extract_nodal_set(u)
    cls = [classify_point(u, spec, x0, np.geomspace(0.02, 0.3, 8), rules_a05)
           for x0 in ns.points]
    strat = stratify(cls, 1)
    assert strat.singular == [] and not strat.strata_y and not strat.strata_star
    assert not strat.inconsistencies


def test_stratify_psi_hyperplane():
    pf = make_psi(3, A)
    ns = extract_nodal_set_grid(pf, 3, 16)
    h = 2.0 / 16
    cls = [classify_point(pf, SPEC0, x0, resolution_scale=h) for x0 in ns.points]
    strat = stratify(cls, 3)
    assert set(strat.strata_y) == {2}
    assert len(strat.strata_y[2]) == len(ns.points)
    assert not strat.strata_star and not strat.inconsistencies


def test_stratify_mixed_disjoint():
    a = 0.4
    spec2 = ProblemSpec(2, a, 2.0, 1.0, 1.0, constant_field(2, 1.0))
    star = classify_point(PolynomialField(ap.extend_from_trace(Poly.monomial(2, (1, 1)), a)),
                          spec2, np.zeros(2))
    ydep = classify_point(make_psi(2, a), spec2, np.array([0.3, 0.0]),
                          resolution_scale=0.05)
    strat = stratify([star, ydep], 2)
    assert len(strat.singular) == 2
    all_members = [i for v in strat.strata_y.values() for i in v]
    all_members += [i for v in strat.strata_star.values() for i in v]
    assert sorted(all_members) == [0, 1]
    assert not strat.inconsistencies


def test_box_counting_singleton():
    dim, r2, _ = box_counting_dimension(np.array([[0.0]]), [0.4, 0.3, 0.2, 0.1])
    assert dim == pytest.approx(0.0, abs=1e-12) and r2 == 1.0


def test_box_counting_line():
    t = np.linspace(-1, 1, 400)
    pts = np.stack([np.zeros_like(t), t], axis=1)
    dim, r2, _ = box_counting_dimension(pts, [0.4, 0.28, 0.2, 0.14, 0.1])
    assert abs(dim - 1.0) <= 0.1 and r2 >= 0.98


def test_box_counting_filled_square_negative_control():
    xs = np.linspace(-1, 1, 60)
    X, Y = np.meshgrid(xs, xs)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    dim, r2, _ = box_counting_dimension(pts, np.geomspace(0.5, 0.1, 6))
    assert abs(dim - 2.0) <= 0.2


def test_box_counting_guards():
    with pytest.raises(ValueError):
        box_counting_dimension(np.zeros((0, 2)), [0.4, 0.3, 0.2, 0.1])
    with pytest.raises(ValueError):
        box_counting_dimension(np.array([[0.0]]), [0.4, 0.3])


def test_frequency_semicontinuity_proxy():
    # points approaching the crossing of two nodal lines: orders along the
    # sequence stay below the order at the limit point
    a = 0.4
    spec2 = ProblemSpec(2, a, 2.0, 1.0, 1.0, constant_field(2, 1.0))
    pf = PolynomialField(ap.extend_from_trace(Poly.monomial(2, (1, 1)), a))
    seq = [np.array([x, 0.0]) for x in (0.4, 0.2, 0.1, 0.05)]
    ks = [classify_point(pf, spec2, x0).k for x0 in seq]
    k0 = classify_point(pf, spec2, np.zeros(2)).k
    assert max(ks) <= k0
    assert all(k == 1 for k in ks) and k0 == 2


def test_no_order_lands_strictly_between_one_and_two(exact_setup_a05, rules_a05):
    _, spec, mesh, u = exact_setup_a05
    ns = extract_nodal_set(u)
    for x0 in ns.points:
        c = classify_point(u, spec, x0, np.geomspace(0.02, 0.3, 8), rules_a05)
        if c.kind != UNCLASSIFIED:
            assert not (1.0 + 0.25 < c.limit < 2.0 - 0.25)


def test_even_poly_reinterpretation_guard():
    with pytest.raises(ValueError):
        aharmonic_from_even_poly(Poly.monomial(2, (1, 1)), 0.3)  # odd in y


def test_classification_serialization(tmp_path):
    pf = make_psi(2, A)
    ns = extract_nodal_set_grid(pf, 2, 30)
    cls = [classify_point(pf, SPEC0, x0, resolution_scale=2.0 / 30)
           for x0 in ns.points[:5]]
    strat = stratify(cls, 2)
    strat.save(str(tmp_path / "nodal"))
    import json
    rec = json.loads((tmp_path / "nodal.json").read_text())
    assert rec["N"] == 2 and len(rec["points"]) == 5
    lines = (tmp_path / "nodal.csv").read_text().strip().splitlines()
    assert lines[0] == "x1,x2,kind,k,type,d"
    assert len(lines) == 6
