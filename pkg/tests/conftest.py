import numpy as np
import pytest

from indeflq.core import ProblemData


def random_definite_problem(rng, n=None, k=None, d=None, T=1.0, points=65):
    """A well-conditioned classical problem: R >> 0, Q >= 0, N >= 0."""
    n = int(n if n is not None else rng.integers(1, 4))
    k = int(k if k is not None else rng.integers(1, 3))
    d = int(d if d is not None else rng.integers(1, 3))
    grid = np.linspace(0.0, T, points)
    A = 0.6 * rng.standard_normal((n, n))
    B = 0.7 * rng.standard_normal((n, k))
    C = [0.3 * rng.standard_normal((n, n)) for _ in range(d)]
    D = [0.3 * rng.standard_normal((n, k)) for _ in range(d)]
    M = rng.standard_normal((k, k))
    R = 0.2 * (M @ M.T) + (0.5 + 0.5 * rng.random()) * np.eye(k)
    Mq = rng.standard_normal((n, n))
    Q = 0.3 * (Mq @ Mq.T)
    Mn = rng.standard_normal((n, n))
    N = 0.3 * (Mn @ Mn.T)
    return ProblemData(n=n, k=k, d=d, T=T, A=A, B=B, C=C, D=D, R=R, Q=Q, N=N, grid=grid)


def scalar_benchmark(r, points=257, T=1.0):
    """A = C = Q = 0, B = D = 1, terminal weight 1: the sharp scalar example."""
    grid = np.linspace(0.0, T, points)
    return ProblemData(
        n=1, k=1, d=1, T=T, A=0.0, B=1.0, C=[0.0], D=[1.0],
        R=float(r), Q=0.0, N=[[1.0]], grid=grid,
    )


def random_scalar_data(rng, points=33):
    """Random scalar problem with a comfortably positive effective weight."""
    grid = np.linspace(0.0, 1.0, points)
    a, b, c, dd = (float(v) for v in 0.8 * rng.standard_normal(4))
    r = float(0.5 + rng.random())
    q = float(rng.standard_normal())
    nn = float(rng.standard_normal())
    data = ProblemData(
        n=1, k=1, d=1, T=1.0, A=a, B=b, C=[c], D=[dd],
        R=r, Q=q, N=[[nn]], grid=grid,
    )
    return data, (a, b, c, dd, r, q, nn)


@pytest.fixture(scope="session")
def rng_session():
    return np.random.default_rng(20250810)
