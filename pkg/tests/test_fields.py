import numpy as np
import pytest

from fblab import polynomials as ap
from fblab.fields import (
    DifferenceField,
    PolynomialField,
    PositivePartField,
    RescaledField,
    exact_remark_solution,
)


def test_exact_solution_is_weight_harmonic_pointwise():
    # strong form checked by centered differences away from the trace
    a = 0.4
    u = exact_remark_solution(1, a)
    rng = np.random.default_rng(2)
    pts = np.stack([rng.uniform(-0.5, 0.5, 6), rng.uniform(0.2, 0.6, 6)], axis=1)
    h = 1e-5

    def val(p):
        return u.values(p)

    for z in pts:
        lap = 0.0
        for ax in range(2):
            e = np.zeros(2)
            e[ax] = h
            lap += (val([z + e])[0] - 2 * val([z])[0] + val([z - e])[0]) / h ** 2
        ey = np.array([0.0, h])
        uy = (val([z + ey])[0] - val([z - ey])[0]) / (2 * h)
        assert lap + a / z[1] * uy == pytest.approx(0.0, abs=1e-4)


def test_exact_solution_boundary_law():
    # the weighted flux equals minus the trace for unit coefficients
    a = -0.3
    u = exact_remark_solution(1, a)
    x = np.array([[0.4], [-0.7]])
    y = 1e-8
    pts = np.concatenate([x, np.full((2, 1), y)], axis=1)
    flux = -(y ** a) * u.gradients(pts)[:, 1]
    np.testing.assert_allclose(flux, -u.trace_values(x), rtol=1e-6)


def test_rescaled_field_chain_rule():
    b = ap.basis(1, 2, 0.2)[0]
    f = PolynomialField(b)
    v = RescaledField(f, [0.1], 0.25, 0.25 ** 2)
    pts = np.array([[0.3, 0.5], [-0.2, 0.1]])
    target = 0.25 * np.array([[0.1, 0.0]]) / 0.25 + pts  # just sanity on shapes
    inner = np.concatenate([0.1 + 0.25 * pts[:, :1], 0.25 * pts[:, 1:]], axis=1)
    np.testing.assert_allclose(v.values(pts), b.evaluate(inner) / 0.25 ** 2, rtol=1e-13)
    np.testing.assert_allclose(v.gradients(pts), b.gradient(inner) * (0.25 / 0.25 ** 2),
                               rtol=1e-13)
    assert v.polynomial_gradient


def test_rescale_guards():
    f = PolynomialField(ap.basis(1, 1, 0.0)[0])
    with pytest.raises(ValueError):
        RescaledField(f, [0.0], 0.5, 0.0)


def test_difference_and_positive_part():
    a = 0.1
    b1 = PolynomialField(ap.basis(1, 1, a)[0])
    b2 = PolynomialField(ap.basis(1, 2, a)[0])
    d = DifferenceField(b1, b2)
    pts = np.array([[0.5, 0.4]])
    assert d.values(pts)[0] == pytest.approx(b1.values(pts)[0] - b2.values(pts)[0])
    assert d.polynomial_gradient
    pp = PositivePartField(b1)
    xs = np.array([[0.5], [-0.5]])
    np.testing.assert_allclose(pp.trace_values(xs), [0.5, 0.0])
    g = pp.gradients(np.array([[0.5, 0.2], [-0.5, 0.2]]))
    assert g[0, 0] == 1.0 and g[1, 0] == 0.0
