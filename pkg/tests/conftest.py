import numpy as np
import pytest

from fblab.domain import BallRules, build_half_ball_mesh
from fblab.fields import CallableField, exact_remark_solution
from fblab.solver import ProblemSpec, solve


def constant_field(N, c):
    return CallableField(N, lambda pts: np.full(len(pts), float(c)),
                         lambda pts: np.zeros_like(pts))


def linear_field(N):
    def grad(pts):
        g = np.zeros_like(pts)
        g[:, 0] = 1.0
        return g
    return CallableField(N, lambda pts: pts[:, 0], grad)


@pytest.fixture(scope="session")
def mesh16():
    return build_half_ball_mesh(1, 16, 16, 1.0, a=0.0)


@pytest.fixture(scope="session")
def rules_a03():
    return BallRules(1, 0.3)


@pytest.fixture(scope="session")
def rules_a05():
    return BallRules(1, 0.5)


@pytest.fixture(scope="session")
def exact_setup_a05():
    """Solver output for the closed-form solution at a = 0.5."""
    a = 0.5
    exact = exact_remark_solution(1, a)
    spec = ProblemSpec(1, a, 2.0, 1.0, 1.0, exact)
    mesh = build_half_ball_mesh(1, 48, 48, 1.0, a=a)
    return exact, spec, mesh, solve(spec, mesh)


@pytest.fixture(scope="session")
def positive_setup():
    """Solver output for g = 1 (one-signed data), a = 0, p = 2."""
    spec = ProblemSpec(1, 0.0, 2.0, 1.0, 1.0, constant_field(1, 1.0))
    mesh = build_half_ball_mesh(1, 32, 32, 1.5, a=0.0)
    return spec, mesh, solve(spec, mesh)
