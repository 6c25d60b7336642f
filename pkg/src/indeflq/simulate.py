"""Monte Carlo verification of the synthesized feedback controls.

Simulates the controlled linear SDE with Euler-Maruyama stepping and
left-point coefficient evaluation, estimates the quadratic cost, checks the
value identity against xi'P(0)xi, and evaluates both sides of the
completing-the-square decomposition with common random numbers.

Randomness is counter-based: path ``p`` of a run draws from a Philox stream
keyed by ``(seed, p)``, so results are independent of how paths are
partitioned across workers.  With antithetic pairing (the default) index
``p`` drives the mirrored pair (W, -W) and statistics are computed over pair
averages.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .core import CoefficientPath, ProblemData, symmetrize
from .errors import NumericalOverflow
from .riccati import RiccatiSolution

__all__ = [
    "SimConfig",
    "ControlPolicy",
    "SimulationReport",
    "simulate_cost",
    "completing_square_report",
    "fundamental_pair_check",
    "hamiltonian_identity_check",
]

STATE_NORM_CAP = 1e12

# feedback u = G x, optionally plus a deterministic perturbation v(t)
FEEDBACK = "feedback-gain"
FEEDBACK_PERTURBED = "feedback-plus-perturbation"
OPEN_LOOP = "open-loop"
ZERO = "zero"


@dataclass
class SimConfig:
    """Monte Carlo controls.

    ``n_paths`` counts antithetic pairs when ``antithetic`` is set, plain
    paths otherwise.  Per-path streams are keyed by (seed, path index).
    """

    n_paths: int = 10_000
    n_steps: int = 256
    seed: int = 0
    antithetic: bool = True

    def validate(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("n_paths and n_steps must be positive")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must fit in 64 bits")


@dataclass
class ControlPolicy:
    """A control law: feedback gain path, perturbed feedback, open loop, or zero."""

    kind: str
    gain: CoefficientPath | None = None
    perturb: CoefficientPath | None = None

    @classmethod
    def feedback(cls, gain) -> "ControlPolicy":
        return cls(kind=FEEDBACK, gain=gain)

    @classmethod
    def feedback_perturbed(cls, gain, v) -> "ControlPolicy":
        return cls(kind=FEEDBACK_PERTURBED, gain=gain, perturb=v)

    @classmethod
    def open_loop(cls, v) -> "ControlPolicy":
        return cls(kind=OPEN_LOOP, perturb=v)

    @classmethod
    def zero(cls) -> "ControlPolicy":
        return cls(kind=ZERO)

    @classmethod
    def from_solution(cls, solution: RiccatiSolution) -> "ControlPolicy":
        gain = CoefficientPath(solution.grid, solution.gain)
        return cls(kind=FEEDBACK, gain=gain)


@dataclass
class SimulationReport:
    """Cost statistics, and both sides of the completing-the-square identity."""

    cost_mean: float
    cost_stderr: float
    n_paths: int
    cs_lhs: float | None = None
    cs_rhs: float | None = None
    cs_residual: float | None = None
    cs_stderr: float | None = None


def _vector_path(v, k, T, name):
    """Normalize a perturbation/open-loop term to a (k, 1) CoefficientPath."""
    if v is None:
        return None
    if isinstance(v, CoefficientPath):
        if v.shape not in ((k, 1),):
            raise ValueError(f"{name}: expected a path of {k}-vectors")
        return v
    arr = np.asarray(v, dtype=float)
    grid = np.array([0.0, T])
    if arr.ndim == 0:
        arr = arr[None]
    if arr.ndim == 1:
        if arr.size != k:
            raise ValueError(f"{name}: expected a {k}-vector")
        return CoefficientPath.constant(arr[:, None], grid)
    if arr.ndim == 2:  # (points, k) samples on a uniform grid over [0, T]
        g = np.linspace(0.0, T, arr.shape[0])
        return CoefficientPath(g, arr[:, :, None])
    raise ValueError(f"{name}: unsupported shape {arr.shape}")


def _gain_path(gain, data: ProblemData, name="gain"):
    if isinstance(gain, CoefficientPath):
        if gain.shape != (data.k, data.n):
            raise ValueError(f"{name}: expected shape ({data.k}, {data.n})")
        return gain
    arr = np.asarray(gain, dtype=float)
    if arr.ndim == 2 and arr.shape == (data.k, data.n):
        return CoefficientPath.constant(arr, np.array([0.0, data.T]))
    if arr.ndim == 3 and arr.shape[1:] == (data.k, data.n):
        return CoefficientPath(np.linspace(0.0, data.T, arr.shape[0]), arr)
    raise ValueError(f"{name}: unsupported shape {arr.shape}")


class _EulerSetup:
    """Left-endpoint coefficient and policy tables for one simulation run."""

    def __init__(self, data: ProblemData, policy: ControlPolicy | None, n_steps: int):
        self.n, self.k, self.d = data.n, data.k, data.d
        self.dt = data.T / n_steps
        self.n_steps = n_steps
        t_left = np.arange(n_steps) * self.dt
        A_, B_, C_, D_, R_, Q_ = data.stacked_at(t_left)
        self.At = np.swapaxes(A_, -1, -2).copy()
        self.Bt = np.swapaxes(B_, -1, -2).copy()
        self.Ct = np.swapaxes(C_, -1, -2).copy()  # (d, steps, n, n)
        self.Dt = np.swapaxes(D_, -1, -2).copy()  # (d, steps, k, n)
        self.R = R_
        self.Q = Q_
        self.N = symmetrize(data.N)
        self.Gt = None
        self.v = None
        if policy is not None:
            if policy.kind in (FEEDBACK, FEEDBACK_PERTURBED):
                gain = _gain_path(policy.gain, data)
                self.Gt = np.swapaxes(gain.at(t_left), -1, -2).copy()  # (steps, n, k)
            if policy.kind in (FEEDBACK_PERTURBED, OPEN_LOOP):
                vp = _vector_path(policy.perturb, data.k, data.T, "perturbation")
                self.v = vp.at(t_left)[:, :, 0] if vp is not None else None
        self.t_left = t_left

    def control(self, j, x):
        b = x.shape[0]
        if self.Gt is None and self.v is None:
            return np.zeros((b, self.k))
        u = x @ self.Gt[j] if self.Gt is not None else np.zeros((b, self.k))
        if self.v is not None:
            u = u + self.v[j]
        return u


def _pair_increments(seed, index, n_steps, d):
    gen = Generator(Philox(key=np.array([seed, index], dtype=np.uint64)))
    return gen.standard_normal((n_steps, d))


def _run_cost_block(data_setup: _EulerSetup, cs_tables, xi, seed, indices, antithetic):
    """Per-path (or per-pair) cost, and the squared-deviation accumulator."""
    su = data_setup
    b = indices.size
    Z = np.empty((b, su.n_steps, su.d))
    for r, idx in enumerate(indices):
        Z[r] = _pair_increments(seed, int(idx), su.n_steps, su.d)
    sq = np.sqrt(su.dt)
    if antithetic:
        dW = np.concatenate([Z, -Z], axis=0) * sq
    else:
        dW = Z * sq
    nb = dW.shape[0]
    x = np.broadcast_to(np.asarray(xi, dtype=float), (nb, su.n)).copy()
    cost = np.zeros(nb)
    qacc = np.zeros(nb) if cs_tables is not None else None
    for j in range(su.n_steps):
        u = su.control(j, x)
        cost += (
            np.einsum("bi,ij,bj->b", u, su.R[j], u)
            + np.einsum("bi,ij,bj->b", x, su.Q[j], x)
        ) * su.dt
        if cs_tables is not None:
            Gs_t, hatRs = cs_tables
            w = u - x @ Gs_t[j]
            qacc += np.einsum("bi,ij,bj->b", w, hatRs[j], w) * su.dt
        drift = x @ su.At[j] + u @ su.Bt[j]
        noise = np.zeros_like(x)
        for i in range(su.d):
            noise += (x @ su.Ct[i, j] + u @ su.Dt[i, j]) * dW[:, j, i:i + 1]
        x = x + drift * su.dt + noise
        if float(np.max(np.sum(x * x, axis=1))) > STATE_NORM_CAP ** 2:
            raise NumericalOverflow(
                f"state norm exceeded {STATE_NORM_CAP:g} at step {j} (explosive closed loop)"
            )
    cost += np.einsum("bi,ij,bj->b", x, su.N, x)
    if antithetic:
        cost = 0.5 * (cost[:b] + cost[b:])
        if qacc is not None:
            qacc = 0.5 * (qacc[:b] + qacc[b:])
    return cost, qacc


def _run_paths(data_setup, cs_tables, xi, config: SimConfig, n_workers: int):
    """All per-pair statistics in path-index order (independent of partition)."""
    total = config.n_paths
    target_block = max(1, int(2_000_000 // max(1, config.n_steps * data_setup.d)))
    ranges = []
    start = 0
    while start < total:
        stop = min(total, start + target_block)
        ranges.append((start, stop))
        start = stop

    def work(rng):
        lo, hi = rng
        idx = np.arange(lo, hi, dtype=np.uint64)
        return _run_cost_block(
            data_setup, cs_tables, xi, config.seed, idx, config.antithetic
        )

    if n_workers <= 1 or len(ranges) == 1:
        parts = [work(r) for r in ranges]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(work, ranges))
    costs = np.concatenate([p[0] for p in parts])
    qaccs = np.concatenate([p[1] for p in parts]) if cs_tables is not None else None
    return costs, qaccs


def _stderr(values):
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(values.size))


def simulate_cost(
    data: ProblemData,
    policy: ControlPolicy,
    xi,
    config: SimConfig,
    n_workers: int = 1,
) -> SimulationReport:
    """Estimate the quadratic cost of a policy from state xi.

    Euler-Maruyama state stepping with left-point coefficient evaluation and
    left-rectangle quadrature of the running cost.  Raises NumericalOverflow
    when a path's state norm exceeds 1e12.
    """
    config.validate()
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (data.n,):
        raise ValueError(f"xi must be an {data.n}-vector")
    setup = _EulerSetup(data, policy, config.n_steps)
    costs, _ = _run_paths(setup, None, xi, config, n_workers)
    n_total = costs.size * (2 if config.antithetic else 1)
    return SimulationReport(
        cost_mean=float(np.mean(costs)),
        cost_stderr=_stderr(costs),
        n_paths=n_total,
    )


def _cs_tables(data: ProblemData, solution: RiccatiSolution, n_steps: int):
    dt = data.T / n_steps
    t_left = np.arange(n_steps) * dt
    P = solution.interp_P(t_left)
    G = solution.interp_gain(t_left)
    D_ = np.stack([di.at(t_left) for di in data.D])
    R_ = data.R.at(t_left)
    hat = symmetrize(R_ + np.einsum("itpq,tpr,itrs->tqs", D_, P, D_))
    return np.swapaxes(G, -1, -2).copy(), hat


def completing_square_report(
    data: ProblemData,
    P_solution: RiccatiSolution,
    policy: ControlPolicy,
    xi,
    config: SimConfig,
    n_workers: int = 1,
) -> SimulationReport:
    """Estimate both sides of J(u; xi) - xi'P(0)xi = E int (u - Gx)' hat_R (u - Gx) dt.

    Both accumulators run on the same Wiener increments (common random
    numbers), so the reported residual is the pathwise defect of the identity
    rather than a difference of independent estimates.
    """
    if not P_solution.completed:
        raise ValueError("completing-square check requires a completed Riccati solution")
    config.validate()
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (data.n,):
        raise ValueError(f"xi must be an {data.n}-vector")
    setup = _EulerSetup(data, policy, config.n_steps)
    tables = _cs_tables(data, P_solution, config.n_steps)
    costs, qaccs = _run_paths(setup, tables, xi, config, n_workers)
    value0 = P_solution.value_at(xi)
    diffs = costs - qaccs
    n_total = costs.size * (2 if config.antithetic else 1)
    return SimulationReport(
        cost_mean=float(np.mean(costs)),
        cost_stderr=_stderr(costs),
        n_paths=n_total,
        cs_lhs=float(np.mean(costs) - value0),
        cs_rhs=float(np.mean(qaccs)),
        cs_residual=float(abs(np.mean(diffs) - value0)),
        cs_stderr=_stderr(diffs),
    )


def fundamental_pair_check(data: ProblemData, gain, config: SimConfig) -> float:
    """Worst defect ||Xtilde X - I|| of the closed-loop fundamental pair.

    Simulates the matrix flow X with drift A + B G and diffusions C_i + D_i G,
    and the inverse flow Xtilde with drift -(A' - sum C'^2) acting from the
    right, on the same increments; Euler stepping converges at strong order
    1/2, so the defect shrinks like sqrt(T / n_steps).
    """
    config.validate()
    gain_path = _gain_path(gain, data)
    n, d = data.n, data.d
    n_steps = config.n_steps
    dt = data.T / n_steps
    sq = np.sqrt(dt)
    t_left = np.arange(n_steps) * dt
    A_, B_, C_, D_, R_, Q_ = data.stacked_at(t_left)
    G_ = gain_path.at(t_left)
    Acl = A_ + np.einsum("tnk,tkr->tnr", B_, G_)
    Ccl = C_ + np.einsum("itnk,tkr->itnr", D_, G_)
    # inverse-flow drift: Acl - sum_i Ccl_i Ccl_i
    Ainv = Acl - np.einsum("itpq,itqr->tpr", Ccl, Ccl)

    eye = np.eye(n)
    worst = 0.0
    total = config.n_paths
    block = max(1, int(500_000 // max(1, n_steps * d)))
    start = 0
    while start < total:
        stop = min(total, start + block)
        idx = np.arange(start, stop, dtype=np.uint64)
        Z = np.empty((idx.size, n_steps, d))
        for r, p_idx in enumerate(idx):
            Z[r] = _pair_increments(config.seed, int(p_idx), n_steps, d)
        if config.antithetic:
            dW = np.concatenate([Z, -Z], axis=0) * sq
        else:
            dW = Z * sq
        nb = dW.shape[0]
        X = np.broadcast_to(eye, (nb, n, n)).copy()
        Xt = np.broadcast_to(eye, (nb, n, n)).copy()
        for j in range(n_steps):
            dX = np.matmul(Acl[j], X) * dt
            dXt = -np.matmul(Xt, Ainv[j]) * dt
            for i in range(d):
                w = dW[:, j, i, None, None]
                dX += np.matmul(Ccl[i, j], X) * w
                dXt -= np.matmul(Xt, Ccl[i, j]) * w
            X = X + dX
            Xt = Xt + dXt
            prod = np.matmul(Xt, X) - eye
            defect = float(np.max(np.sqrt(np.sum(prod * prod, axis=(-2, -1)))))
            worst = max(worst, defect)
            if max(float(np.max(np.abs(X))), float(np.max(np.abs(Xt)))) > STATE_NORM_CAP:
                raise NumericalOverflow("fundamental pair flow overflowed")
        start = stop
    return worst


def hamiltonian_identity_check(
    data: ProblemData, P_solution: RiccatiSolution, probe_points: int = 64
) -> float:
    """Algebraic defect of the stationarity condition along a solved path.

    Evaluates || hat_R(P) G + B'P + sum_i D_i'P C_i || at probe times; the
    gain is defined as the exact solution of this linear system, so the
    defect is numerical noise, of order 1e-10 (1 + ||P||).
    """
    if not P_solution.completed:
        raise ValueError("identity check requires a completed Riccati solution")
    grid = P_solution.grid
    idx = np.unique(
        np.linspace(0, grid.size - 1, min(probe_points, grid.size)).round().astype(int)
    )
    times = grid[idx]
    P = P_solution.P[idx]
    G = P_solution.gain[idx]
    A_, B_, C_, D_, R_, Q_ = data.stacked_at(times)
    hat = symmetrize(R_ + np.einsum("itpq,tpr,itrs->tqs", D_, P, D_))
    rhs = np.einsum("tpk,tpn->tkn", B_, P) + np.einsum(
        "itpq,itpr->tqr", D_, np.einsum("tpr,itrs->itps", P, C_)
    )
    defect = np.einsum("tkq,tqn->tkn", hat, G) + rhs
    return float(np.max(np.sqrt(np.sum(defect * defect, axis=(-2, -1)))))
