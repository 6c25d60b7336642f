"""Problem data and the pointwise operators of the indefinite LQ theory.

Coefficients are deterministic matrix paths sampled on one uniform grid over
[0, T].  Because the data are deterministic, the martingale part of the
unknown vanishes and every operator below is evaluated with that part set to
zero unless a nonzero family is passed explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolation, GridMismatch

__all__ = [
    "PIECEWISE_CONSTANT_LEFT",
    "PIECEWISE_LINEAR",
    "DEFAULT_EPS_POS",
    "CoefficientPath",
    "ProblemData",
    "symmetrize",
    "symmetric_part_error",
    "min_eigenvalue",
    "batched_min_eig",
    "eval_hat_R",
    "eval_gamma",
    "eval_f",
]

PIECEWISE_CONSTANT_LEFT = "piecewise-constant-left"
PIECEWISE_LINEAR = "piecewise-linear"

# Positivity floor applied to the minimal eigenvalue of the effective control
# weight R + sum_i D_i' P D_i.  Turns the strict inequality of the constraint
# into a testable predicate and guards the inverse in the gain formula.
DEFAULT_EPS_POS = 1e-8

# Construction-time symmetry tolerances for weight matrices.
SYMMETRY_TOL = 1e-12
SYMMETRY_HARD_REL = 1e-9


def symmetrize(M):
    """Project onto the symmetric part, (M + M') / 2 (batched over leading axes)."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def symmetric_part_error(M):
    """Frobenius norm of the antisymmetric part (batched: max over leading axes)."""
    M = np.asarray(M, dtype=float)
    skew = M - np.swapaxes(M, -1, -2)
    return float(np.max(np.sqrt(np.sum(skew * skew, axis=(-2, -1)))))


def min_eigenvalue(M):
    """Smallest eigenvalue of a symmetric matrix."""
    M = symmetrize(M)
    if M.shape[-1] == 1:
        return float(M[..., 0, 0]) if M.ndim == 2 else M[..., 0, 0]
    return float(np.linalg.eigvalsh(M)[0]) if M.ndim == 2 else np.linalg.eigvalsh(M)[..., 0]


def batched_min_eig(M):
    """Smallest eigenvalue along the last two axes of a stack of symmetric matrices."""
    M = np.asarray(M, dtype=float)
    if M.shape[-1] == 1:
        return M[..., 0, 0].copy()
    return np.linalg.eigvalsh(symmetrize(M))[..., 0]


def _check_matrix(M, rows, cols, name):
    M = np.asarray(M, dtype=float)
    if M.shape[-2:] != (rows, cols):
        raise ValueError(f"{name}: expected trailing shape ({rows}, {cols}), got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name}: contains non-finite entries")
    return M


@dataclass(frozen=True)
class CoefficientPath:
    """A matrix-valued path given by samples on a uniform grid.

    Parameters
    ----------
    grid : array, shape (m+1,)
        Strictly increasing times t_0 = 0 < ... < t_m = T with uniform spacing.
    samples : array, shape (m+1, rows, cols)
        One matrix per grid point.
    interpolation : str
        ``piecewise-constant-left`` (value on [t_j, t_{j+1}) is the sample at
        t_j; at t = T the last piece's value, i.e. the left limit) or
        ``piecewise-linear`` (default).
    """

    grid: np.ndarray
    samples: np.ndarray
    interpolation: str = PIECEWISE_LINEAR

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        samples = np.asarray(self.samples, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must hold at least two times")
        if samples.ndim == 1:  # scalar path convenience
            samples = samples[:, None, None]
        if samples.ndim != 3 or samples.shape[0] != grid.size:
            raise ValueError(
                f"samples shape {samples.shape} does not match grid of {grid.size} points"
            )
        if grid[0] != 0.0:
            raise ValueError("grid must start at 0")
        T = grid[-1]
        if T <= 0.0:
            raise ValueError("horizon must be positive")
        h = T / (grid.size - 1)
        if np.max(np.abs(np.diff(grid) - h)) > 1e-12 * T:
            raise ValueError("grid spacing is not uniform")
        if not np.all(np.isfinite(samples)):
            raise ValueError("path samples contain non-finite entries")
        if self.interpolation not in (PIECEWISE_CONSTANT_LEFT, PIECEWISE_LINEAR):
            raise ValueError(f"unknown interpolation mode {self.interpolation!r}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "samples", samples)

    @property
    def m(self) -> int:
        return self.grid.size - 1

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    @property
    def shape(self):
        return self.samples.shape[1:]

    @classmethod
    def constant(cls, M, grid, interpolation=PIECEWISE_LINEAR):
        """Path that holds one matrix at every grid point."""
        M = np.asarray(M, dtype=float)
        if M.ndim == 0:
            M = M[None, None]
        grid = np.asarray(grid, dtype=float)
        samples = np.broadcast_to(M, (grid.size,) + M.shape).copy()
        return cls(grid, samples, interpolation)

    def at(self, t):
        """Evaluate at scalar or vector ``t`` in [0, T]."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        h = self.T / self.m
        pos = np.clip(tt / h, 0.0, self.m)
        j = np.minimum(pos.astype(int), self.m - 1)
        if self.interpolation == PIECEWISE_CONSTANT_LEFT:
            out = self.samples[j]
        else:
            w = (pos - j)[:, None, None]
            out = (1.0 - w) * self.samples[j] + w * self.samples[j + 1]
        return out[0] if scalar else out

    def same_grid(self, other: "CoefficientPath") -> bool:
        return self.grid.shape == other.grid.shape and np.array_equal(self.grid, other.grid)


def _as_path(value, grid, rows, cols, name, interpolation):
    """Accept a CoefficientPath, a constant matrix, or stacked samples."""
    if isinstance(value, CoefficientPath):
        p = value
        if p.shape != (rows, cols):
            raise ValueError(f"{name}: expected shape ({rows}, {cols}), got {p.shape}")
        if not np.array_equal(p.grid, grid):
            raise GridMismatch(f"{name}: path grid differs from the problem grid")
        return p
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr[None, None]
    if arr.ndim == 2:
        arr = _check_matrix(arr, rows, cols, name)
        return CoefficientPath.constant(arr, grid, interpolation)
    arr = _check_matrix(arr, rows, cols, name)
    if arr.shape[0] != grid.size:
        raise GridMismatch(f"{name}: {arr.shape[0]} samples for a grid of {grid.size} points")
    return CoefficientPath(grid, arr, interpolation)


@dataclass(frozen=True)
class ProblemData:
    """Coefficient tuple (A, B, C_1..C_d, D_1..D_d; R, Q, N) with horizon T.

    ``R`` and ``Q`` may be indefinite; ``N`` is the terminal weight.  All paths
    share one uniform grid.  Constant matrices are accepted anywhere a path is
    expected and are expanded to the grid.
    """

    n: int
    k: int
    d: int
    T: float
    A: CoefficientPath
    B: CoefficientPath
    C: tuple
    D: tuple
    R: CoefficientPath
    Q: CoefficientPath
    N: np.ndarray
    grid: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n, k, d = int(self.n), int(self.k), int(self.d)
        if min(n, k, d) < 1:
            raise ValueError("dimensions n, k, d must be positive")
        T = float(self.T)
        if T <= 0.0:
            raise ValueError("horizon T must be positive")
        grid = self.grid
        if grid is None:
            base = self.A if isinstance(self.A, CoefficientPath) else None
            if base is None:
                raise ValueError("grid is required unless A is already a CoefficientPath")
            grid = base.grid
        grid = np.asarray(grid, dtype=float)
        if abs(grid[-1] - T) > 1e-12 * max(T, 1.0):
            raise ValueError("grid must end at the horizon T")
        given = [self.A, self.B, self.R, self.Q, *self.C, *self.D]
        modes = {p.interpolation for p in given if isinstance(p, CoefficientPath)}
        if len(modes) > 1:
            raise ValueError(f"coefficient paths mix interpolation modes: {sorted(modes)}")
        interp = modes.pop() if modes else PIECEWISE_LINEAR
        A = _as_path(self.A, grid, n, n, "A", interp)
        B = _as_path(self.B, grid, n, k, "B", interp)
        C = tuple(_as_path(ci, grid, n, n, f"C[{i}]", interp) for i, ci in enumerate(self.C))
        D = tuple(_as_path(di, grid, n, k, f"D[{i}]", interp) for i, di in enumerate(self.D))
        if len(C) != d or len(D) != d:
            raise ValueError(f"C and D must each have d = {d} entries")
        R = _as_path(self.R, grid, k, k, "R", interp)
        Q = _as_path(self.Q, grid, n, n, "Q", interp)
        N = _check_matrix(np.asarray(self.N, dtype=float), n, n, "N")
        for name, path in (("R", R), ("Q", Q)):
            err = symmetric_part_error(path.samples)
            if err > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(path.samples)))):
                raise ValueError(f"{name} samples are not symmetric (defect {err:.3e})")
        if symmetric_part_error(N) > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(N)))):
            raise ValueError("terminal weight N is not symmetric")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "N", symmetrize(N))

    @property
    def m(self) -> int:
        return self.grid.size - 1

    @property
    def interpolation(self) -> str:
        return self.A.interpolation

    def coeffs_at(self, t):
        """All coefficients at scalar time t: (A, B, C, D, R, Q) with C, D stacked (d, ...)."""
        A = self.A.at(t)
        B = self.B.at(t)
        C = np.stack([c.at(t) for c in self.C])
        D = np.stack([di.at(t) for di in self.D])
        R = self.R.at(t)
        Q = self.Q.at(t)
        return A, B, C, D, R, Q

    def stacked_at(self, times):
        """Coefficients at a vector of times; C, D have shape (d, len(times), n, ·)."""
        times = np.asarray(times, dtype=float)
        A = self.A.at(times)
        B = self.B.at(times)
        C = np.stack([c.at(times) for c in self.C])
        D = np.stack([di.at(times) for di in self.D])
        R = self.R.at(times)
        Q = self.Q.at(times)
        return A, B, C, D, R, Q

    def with_weights(self, R=None, Q=None, N=None):
        """Copy of the data with some weights replaced (paths or constants)."""
        return ProblemData(
            n=self.n, k=self.k, d=self.d, T=self.T,
            A=self.A, B=self.B, C=self.C, D=self.D,
            R=self.R if R is None else R,
            Q=self.Q if Q is None else Q,
            N=self.N if N is None else N,
            grid=self.grid,
        )


def _lambda_or_zero(Lambda, d, n):
    if Lambda is None:
        return np.zeros((d, n, n))
    Lambda = np.asarray(Lambda, dtype=float)
    if Lambda.shape != (d, n, n):
        raise ValueError(f"Lambda must have shape ({d}, {n}, {n}), got {Lambda.shape}")
    return Lambda


def eval_hat_R(P, data: ProblemData, t):
    """Effective control weight R(t) + sum_i D_i(t)' P D_i(t), symmetrized."""
    P = np.asarray(P, dtype=float)
    D = np.stack([di.at(t) for di in data.D])
    out = data.R.at(t) + np.einsum("ipq,pr,irs->qs", D, P, D)
    return symmetrize(out)


def _gain_system(P, Lambda, data: ProblemData, t):
    """Return (hat_R, rhs) of the linear system hat_R * Gamma = -rhs."""
    P = symmetrize(np.asarray(P, dtype=float))
    Lambda = _lambda_or_zero(Lambda, data.d, data.n)
    A, B, C, D, R, Q = data.coeffs_at(t)
    hat = symmetrize(R + np.einsum("ipq,pr,irs->qs", D, P, D))
    rhs = B.T @ P + np.einsum("ipq,ipr->qr", D, np.einsum("pr,irs->ips", P, C) + Lambda)
    # rhs = B'P + sum_i D_i'(P C_i + Lambda_i), shape (k, n)
    return hat, rhs, (A, B, C, D, R, Q)


def eval_gamma(P, Lambda, data: ProblemData, t, eps_pos=DEFAULT_EPS_POS):
    """Optimal feedback gain Gamma(P, Lambda) at time t.

    Solves hat_R(P) Gamma = -(B'P + sum_i D_i'(P C_i + Lambda_i)).  Raises
    ConstraintViolation when the minimal eigenvalue of hat_R(P) is at or below
    the positivity floor.
    """
    hat, rhs, _ = _gain_system(P, Lambda, data, t)
    lam = min_eigenvalue(hat)
    if lam <= eps_pos:
        raise ConstraintViolation(t, lam)
    return -np.linalg.solve(hat, rhs)


def eval_f(P, Lambda, data: ProblemData, t, eps_pos=DEFAULT_EPS_POS):
    """Riccati drift operator f(P, Lambda) at time t (symmetric n x n).

    f = A'P + PA + sum_i (C_i'P C_i + C_i' L_i + L_i C_i) + Q - Gamma' hat_R Gamma.
    """
    hat, rhs, (A, B, C, D, R, Q) = _gain_system(P, Lambda, data, t)
    lam = min_eigenvalue(hat)
    if lam <= eps_pos:
        raise ConstraintViolation(t, lam)
    P = symmetrize(np.asarray(P, dtype=float))
    Lambda = _lambda_or_zero(Lambda, data.d, data.n)
    PC = np.einsum("pr,irs->ips", P, C)
    base = A.T @ P + P @ A + Q
    base = base + np.einsum("ipq,ipr->qr", C, PC + Lambda)
    base = base + np.einsum("ipq,iqr->pr", Lambda, C)
    # Gamma' hat_R Gamma = rhs' hat_R^{-1} rhs since hat_R Gamma = -rhs
    quad = rhs.T @ np.linalg.solve(hat, rhs)
    return symmetrize(base - quad)
