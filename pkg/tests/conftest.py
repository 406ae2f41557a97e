import numpy as np
import pytest

from plradial import ProblemSpec, parse


def scalar_problem(a="1", f="u1", p=2.0, N=3, beta=1.0):
    """One-component problem with coefficient a(r) and nonlinearity f(u1)."""
    return ProblemSpec(
        m=1,
        p=p,
        N=N,
        coefficients=(parse(a, ["r"]),),
        nonlinearities=(parse(f, ["u1"]),),
        beta=beta,
    )


def sinh_over_r(r: np.ndarray) -> np.ndarray:
    out = np.ones_like(r)
    out[r > 0] = np.sinh(r[r > 0]) / r[r > 0]
    return out


@pytest.fixture
def linear_problem():
    return scalar_problem()
