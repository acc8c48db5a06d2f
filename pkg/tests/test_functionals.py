"""Frequency functionals, integral identities, Monneau, inequalities."""

import math

import numpy as np
import pytest

from fblab import polynomials as ap
from fblab.domain import BallRules
from fblab.fields import PolynomialField, exact_remark_solution
from fblab.functionals import (
    DegenerateHError,
    check_monneau_monotonicity,
    check_poincare,
    check_rellich_identities,
    check_trace_inequality,
    compute_DHG,
    default_rules,
    frequency,
    frequency_profile,
    gradient_identity_residual,
    monneau,
    monneau_profile,
    perturbed_frequency,
)
from fblab.polyalg import Poly, random_poly
from fblab.solver import ProblemSpec

from conftest import constant_field

A = 0.3
SPEC0 = ProblemSpec(1, A, 2.0, 0.0, 0.0, constant_field(1, 0.0))


def test_constant_field_functionals(rules_a03):
    spec = ProblemSpec(1, A, 2.0, 0.0, 1.0, constant_field(1, 2.0))
    c = constant_field(1, 2.0)
    D, H, G = compute_DHG(c, spec, [0.0], 0.5, rules_a03)
    beta = ap.sphere_monomial_integral(1, A, (0, 0))
    assert D == pytest.approx(0.0, abs=1e-14)
    assert H == pytest.approx(4.0 * beta, rel=1e-12)
    # G = lam_plus * c^p * |thin ball| / r^(N+a-1)
    assert G == pytest.approx(4.0 * (2 * 0.5) / 0.5 ** A, rel=1e-12)
    assert frequency(c, spec, [0.0], 0.5, rules_a03) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("a", [-0.5, 0.0, 0.5])
def test_frequency_constant_on_homogeneous(k, a):
    rules = default_rules(1, a)
    spec = ProblemSpec(1, a, 2.0, 0.0, 0.0, constant_field(1, 0.0))
    b = ap.basis(1, k, a)[0]
    for r in (0.12, 0.35, 0.8):
        assert frequency(b, spec, [0.0], r, rules) == pytest.approx(k, abs=1e-9)
        assert perturbed_frequency(b, spec, [0.0], r, rules) == pytest.approx(k, abs=1e-9)


def test_h_scaling_of_homogeneous(rules_a03):
    b = ap.basis(1, 2, A)[0]
    _, H1, _ = compute_DHG(b, SPEC0, [0.0], 1.0, rules_a03)
    _, Hr, _ = compute_DHG(b, SPEC0, [0.0], 0.4, rules_a03)
    assert Hr == pytest.approx(0.4 ** 4 * H1, rel=1e-12)


def test_degenerate_h_is_hard_error(rules_a03):
    z = constant_field(1, 0.0)
    with pytest.raises(DegenerateHError):
        frequency(z, SPEC0, [0.0], 0.5, rules_a03)


def test_geometry_guard(rules_a03):
    with pytest.raises(ValueError):
        compute_DHG(constant_field(1, 1.0), SPEC0, [0.8], 0.5, rules_a03)


def test_profile_flat_for_homogeneous(rules_a03):
    b = ap.basis(1, 2, A)[0]
    prof = frequency_profile(b, SPEC0, [0.0], np.geomspace(0.05, 0.6, 10), rules_a03)
    assert prof.order == 2
    assert prof.confidence == pytest.approx(0.5, abs=1e-9)
    assert not prof.flagged
    np.testing.assert_allclose(prof.freq, 2.0, atol=1e-9)


def test_profile_of_exact_solution(exact_setup_a05, rules_a05):
    exact, spec, mesh, u = exact_setup_a05
    prof = frequency_profile(exact, spec, [0.0], np.geomspace(0.04, 0.4, 12), rules_a05)
    assert prof.order == 1
    assert abs(prof.limit - 1.0) < 0.05
    assert prof.monotone_violation <= 1e-9


def test_profile_on_solver_output_center_on_nodal_set(exact_setup_a05, rules_a05):
    _, spec, mesh, u = exact_setup_a05
    prof = frequency_profile(u, spec, [0.0], np.geomspace(0.05, 0.4, 10), rules_a05)
    assert prof.order == 1 and prof.order >= 1


def test_rellich_identities_exact_solution():
    for a in (-0.5, 0.5):
        exact = exact_remark_solution(1, a)
        spec = ProblemSpec(1, a, 2.0, 1.0, 1.0, exact)
        rules = default_rules(1, a)
        rep = check_rellich_identities(exact, spec, np.geomspace(0.1, 0.4, 24), rules=rules)
        assert rep.max_interior("surface_residual") < 1e-8
        assert rep.max_interior("pohozaev_residual") < 1e-8


def test_rellich_identities_polynomial_neumann(rules_a03):
    b = ap.basis(1, 3, A)[0]
    rep = check_rellich_identities(b, SPEC0, np.geomspace(0.1, 0.6, 12), rules=rules_a03)
    assert rep.max_interior("surface_residual") < 1e-8
    assert rep.max_interior("pohozaev_residual") < 1e-8


def test_rellich_zero_field(rules_a03):
    rep = check_rellich_identities(constant_field(1, 0.0), SPEC0,
                                   np.geomspace(0.1, 0.5, 6), rules=rules_a03)
    assert np.all(rep.entries["H"] == 0.0)


def test_hprime_positive_and_accurate(exact_setup_a05, rules_a05):
    exact, spec, _, _ = exact_setup_a05
    radii = np.geomspace(0.1, 0.42, 160)
    rep = check_rellich_identities(exact, spec, radii, rules=rules_a05)
    assert rep.max_interior("hprime_residual") < 2e-4
    hp = rep.entries["Hprime"]
    assert np.all(hp[np.isfinite(hp)] >= 0.0)


# ----------------------------------------------------------------------
# Monneau functional
# ----------------------------------------------------------------------

def test_monneau_of_itself_vanishes(rules_a03):
    b = ap.basis(1, 2, A)[0]
    for r in (0.1, 0.3, 0.6):
        assert monneau(b, b, [0.0], r, rules_a03) == pytest.approx(0.0, abs=1e-15)


def test_monneau_quadratic_growth(rules_a03):
    # comparison against the next-degree element grows like r^2 with slope H(q, 1)
    b1 = ap.basis(1, 1, A)[0]
    b2 = ap.basis(1, 2, A)[0]
    u = PolynomialField(b1.as_poly() + b2.as_poly())
    Hq1 = ap.sphere_integral_poly(b2.as_poly() * b2.as_poly(), 1, A, 1.0)
    for r in (0.2, 0.4):
        assert monneau(u, b1, [0.0], r, rules_a03) == pytest.approx(r ** 2 * Hq1, rel=1e-11)


def test_monneau_compensated_monotonicity_polynomial(rules_a03):
    b2 = ap.basis(1, 2, A)[0]
    b4 = ap.basis(1, 4, A)[0]
    u = PolynomialField(b2.as_poly() + b4.as_poly())
    rep = check_monneau_monotonicity(u, b2, [0.0], SPEC0,
                                     np.geomspace(0.1, 0.5, 8),
                                     np.geomspace(0.07, 0.45, 13),
                                     C_hat=0.0, rules=rules_a03)
    assert rep.ok


def test_monneau_estimated_constant_on_solver_output(exact_setup_a05, rules_a05):
    exact, spec, mesh, u = exact_setup_a05
    p1 = ap.combine(ap.basis(1, 1, 0.5), [1 - 0.5])
    rep = check_monneau_monotonicity(u, p1, [0.0], spec,
                                     np.geomspace(0.1, 0.4, 10),
                                     np.geomspace(0.06, 0.35, 16),
                                     rules=rules_a05)
    assert rep.ok
    assert rep.C_hat >= 0.0 and not rep.C_hat_supplied


def test_monneau_tail_vanishes_for_true_limit(exact_setup_a05, rules_a05):
    exact, spec, _, _ = exact_setup_a05
    p1 = ap.combine(ap.basis(1, 1, 0.5), [0.5])
    tail = monneau_profile(exact, p1, [0.0], np.geomspace(0.01, 0.3, 8), rules_a05)
    assert tail[0] < 0.12 * tail[-1]
    assert np.all(np.diff(tail) > 0.0)


# ----------------------------------------------------------------------
# Functional inequalities
# ----------------------------------------------------------------------

def test_poincare_constant_field(rules_a03):
    # v = 1: (N+a) alpha <= beta in normalized form
    rep = check_poincare(constant_field(1, 1.0), 1, A, 1.0, rules_a03)
    alpha = ap.ball_monomial_integral(1, A, (0, 0))
    beta = ap.sphere_monomial_integral(1, A, (0, 0))
    assert rep["lhs"] == pytest.approx((1 + A) * alpha, rel=1e-12)
    assert rep["rhs"] == pytest.approx(beta, rel=1e-12)
    assert rep["ok"] and (1 + A) * alpha <= beta


def test_poincare_zero_field(rules_a03):
    rep = check_poincare(constant_field(1, 0.0), 1, A, 0.7, rules_a03)
    assert rep["lhs"] == 0.0 and rep["ok"]


def test_poincare_random_harmonic_polynomials(rules_a03):
    rng = np.random.default_rng(7)
    for _ in range(20):
        k = int(rng.integers(1, 5))
        B = ap.basis(1, k, A)
        v = PolynomialField(ap.combine(B, rng.normal(size=len(B))))
        for r in (0.4, 0.9):
            assert check_poincare(v, 1, A, r, rules_a03)["ok"]


def test_trace_inequality_scaling(rules_a03):
    rng = np.random.default_rng(3)
    ratios = {r: [] for r in (0.2, 0.45, 0.9)}
    for _ in range(12):
        v = PolynomialField(random_poly(2, 4, rng))
        for r in ratios:
            out = check_trace_inequality(v, 1, A, r, rules_a03)
            ratios[r].append(out["ratio"])
    worst = {r: max(v) for r, v in ratios.items()}
    assert all(np.isfinite(list(worst.values())))
    vals = np.array(list(worst.values()))
    # the empirical constant must not blow up as the radius shrinks
    assert vals.max() <= 4.0 * vals.min()


# ----------------------------------------------------------------------
# Pointwise differential identity
# ----------------------------------------------------------------------

def test_gradient_identity_on_weight_harmonic_polynomials():
    for k in (2, 3, 4):
        for N in (1, 2):
            b = ap.basis(N, k, 0.3)[0]
            assert gradient_identity_residual(b.as_poly()) < 1e-12


def test_gradient_identity_on_random_even_polynomials():
    rng = np.random.default_rng(19)
    # even-in-y polynomials of the form f(x1, x2) + g(x1, x2) y^2
    for _ in range(10):
        f = random_poly(2, 3, rng)
        g = random_poly(2, 2, rng)
        even = Poly(3, {e + (0,): c for e, c in f.terms.items()})
        even = even + Poly(3, {e + (2,): c for e, c in g.terms.items()})
        assert gradient_identity_residual(even) < 1e-11
