"""Solvability certificates for the indefinite Riccati problem.

A certificate is a checkable witness that the backward Riccati flow admits a
bounded solution: either a concrete subsolution (drift residual positive
semi-definite, effective control weight positive, terminal value dominated by
N), the scalar comparison-function criterion with its explicit exponential
formula, the two classical definite-regime cases, or a shift of the weights
by a compensating path K.

Every certificate carries the margin epsilon: the largest uniform amount by
which the control weight R could be lowered with the witness still valid.
A strictly positive margin is what guarantees both solvability of the Riccati
problem and attainment of the optimal control.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .core import (
    DEFAULT_EPS_POS,
    CoefficientPath,
    ProblemData,
    batched_min_eig,
    min_eigenvalue,
    symmetric_part_error,
    symmetrize,
)
from .errors import GridMismatch, PhiNonpositive, PreconditionFailed
from .riccati import RiccatiSolution, derive_gain_margin

__all__ = [
    "SubsolutionCandidate",
    "Certificate",
    "check_subsolution",
    "certify_scalar_comparison",
    "certify_definite_regime",
    "apply_shift",
    "shift_solution_back",
    "optimal_constant_alpha",
    "constant_threshold_alpha_schedule",
    "KIND_SUBSOLUTION",
    "KIND_SCALAR_COMPARISON",
    "KIND_DEFINITE_CONTROL",
    "KIND_DEFINITE_TERMINAL",
    "KIND_SHIFT",
]

# Certificate kinds.  The scalar-comparison kind is the phi-based criterion;
# the two definite kinds are the classical sufficient conditions it recovers.
KIND_SUBSOLUTION = "explicit-subsolution"
KIND_SCALAR_COMPARISON = "scalar-comparison"
KIND_DEFINITE_CONTROL = "definite-control-weight"
KIND_DEFINITE_TERMINAL = "definite-terminal-weight"
KIND_SHIFT = "shift"

CERTIFIED = "certified"
FAILED = "failed"

# slack accepted on semi-definiteness checks of given data
PSD_SLACK = 1e-10


@dataclass
class SubsolutionCandidate:
    """A candidate subsolution path F with its time derivative.

    When ``dF`` is omitted it is filled by central differences on the grid
    (one-sided at the ends) and checks run with a 10x inflated tolerance.
    """

    grid: np.ndarray
    F: np.ndarray
    dF: np.ndarray | None = None
    source: str = "user"
    derivative_fd: bool = field(default=False, repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        F = np.asarray(self.F, dtype=float)
        if F.ndim == 2:
            F = np.broadcast_to(F, (grid.size,) + F.shape).copy()
        if F.shape[0] != grid.size:
            raise GridMismatch("F samples do not match the grid")
        if symmetric_part_error(F) > 1e-10 * max(1.0, float(np.max(np.abs(F)))):
            raise ValueError("subsolution candidate F is not symmetric")
        if self.dF is None:
            dF = np.gradient(F, grid[1] - grid[0], axis=0, edge_order=2)
            self.derivative_fd = True
        else:
            dF = np.asarray(self.dF, dtype=float)
            if dF.ndim == 2:
                dF = np.broadcast_to(dF, (grid.size,) + dF.shape).copy()
            if dF.shape[0] != grid.size:
                raise GridMismatch("dF samples do not match the grid")
        self.grid = grid
        self.F = symmetrize(F)
        self.dF = symmetrize(dF)

    @classmethod
    def zero(cls, data: ProblemData) -> "SubsolutionCandidate":
        z = np.zeros((data.grid.size, data.n, data.n))
        return cls(grid=data.grid, F=z, dF=np.zeros_like(z), source="zero")

    @classmethod
    def scalar_phi(cls, data: ProblemData, phi_grid, phi) -> "SubsolutionCandidate":
        """The isotropic candidate F = phi * I sampled on the data grid."""
        phi_on = np.interp(data.grid, phi_grid, phi)
        eye = np.eye(data.n)
        F = phi_on[:, None, None] * eye
        return cls(grid=data.grid, F=F, source="scalar-phi")


@dataclass
class Certificate:
    """Solvability verdict with its margin and witnessing paths."""

    kind: str
    verdict: str
    epsilon: float
    reason: str | None = None
    t_worst: float | None = None
    phi_grid: np.ndarray | None = None
    phi: np.ndarray | None = None
    alpha: np.ndarray | None = None
    boundary: np.ndarray | None = None
    threshold: float | None = None

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def witness_value_at_zero(self, n: int) -> np.ndarray:
        """F(0) of the certificate's witness (zero matrix when none is carried)."""
        if self.phi is not None:
            return float(self.phi[0]) * np.eye(n)
        return np.zeros((n, n))


def _stacked_subsolution_parts(data: ProblemData, cand: SubsolutionCandidate):
    """Shift-independent pieces of the subsolution conditions, per grid point."""
    A_, B_, C_, D_, R_, Q_ = data.stacked_at(data.grid)
    F = cand.F
    hat = symmetrize(R_ + np.einsum("itpq,tpr,itrs->tqs", D_, F, D_))
    rhs = np.einsum("tpk,tpn->tkn", B_, F) + np.einsum(
        "itpq,itpr->tqr", D_, np.einsum("tpr,itrs->itps", F, C_)
    )
    M = np.einsum("tpq,tpr->tqr", A_, F)  # A'F
    L = cand.dF + M + np.swapaxes(M, -1, -2) + Q_
    L = L + np.einsum("itpq,itpr->tqr", C_, np.einsum("tpr,itrs->itps", F, C_))
    return symmetrize(L), hat, rhs


def _drift_min_eigs(L, hat, rhs, shift):
    k = hat.shape[-1]
    hat_s = hat - shift * np.eye(k)
    sol = np.linalg.solve(hat_s, rhs)
    quad = np.einsum("tkn,tkr->tnr", rhs, sol)
    return batched_min_eig(L - quad)


def check_subsolution(
    cand: SubsolutionCandidate,
    data: ProblemData,
    tol: float = 1e-9,
    eps_pos: float = DEFAULT_EPS_POS,
) -> Certificate:
    """Check the three subsolution conditions and measure the margin.

    Certified when, at every grid point, the drift residual dF/dt + f(F, 0)
    is positive semi-definite to ``tol``, the effective control weight stays
    above the positivity floor, and F(T) <= N to ``tol``.  The margin epsilon
    is the supremal uniform reduction of R under which F remains a
    subsolution, found by bisection to 1e-6 relative.
    """
    if cand.grid.size != data.grid.size or not np.allclose(
        cand.grid, data.grid, rtol=0.0, atol=1e-12 * max(1.0, data.T)
    ):
        raise GridMismatch("candidate grid differs from the problem grid")
    tol_eff = tol * (10.0 if cand.derivative_fd else 1.0)
    L, hat, rhs = _stacked_subsolution_parts(data, cand)
    grid = data.grid

    hat_eigs = batched_min_eig(hat)
    hat_min = float(np.min(hat_eigs))
    if hat_min <= eps_pos:
        j = int(np.argmin(hat_eigs))
        return Certificate(
            kind=KIND_SUBSOLUTION, verdict=FAILED, epsilon=0.0,
            reason="effective control weight not positive along F",
            t_worst=float(grid[j]),
        )
    drift_eigs = _drift_min_eigs(L, hat, rhs, 0.0)
    if float(np.min(drift_eigs)) < -tol_eff:
        j = int(np.argmin(drift_eigs))
        return Certificate(
            kind=KIND_SUBSOLUTION, verdict=FAILED, epsilon=0.0,
            reason="drift residual dF/dt + f(F, 0) not positive semi-definite",
            t_worst=float(grid[j]),
        )
    term = min_eigenvalue(data.N - cand.F[-1])
    if term < -tol_eff:
        return Certificate(
            kind=KIND_SUBSOLUTION, verdict=FAILED, epsilon=0.0,
            reason="terminal value F(T) not dominated by N",
            t_worst=float(grid[-1]),
        )

    # supremal shift keeping F a subsolution of the R-reduced problem
    eps_hi = hat_min - eps_pos

    def ok(shift):
        if shift >= hat_min - eps_pos:
            return False
        return float(np.min(_drift_min_eigs(L, hat, rhs, shift))) >= -tol_eff

    if ok(eps_hi * (1.0 - 1e-12)):
        epsilon = eps_hi
    else:
        lo, hi = 0.0, eps_hi
        while hi - lo > 1e-6 * max(hi, 1e-30):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        epsilon = lo
    if epsilon <= 0.0:
        return Certificate(
            kind=KIND_SUBSOLUTION, verdict=FAILED, epsilon=0.0,
            reason="no positive margin: subsolution is not strict",
            t_worst=None,
        )
    return Certificate(kind=KIND_SUBSOLUTION, verdict=CERTIFIED, epsilon=float(epsilon))


def _cumtrapz(values, h):
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * h * (values[1:] + values[:-1]))
    return out


def _normalize_alpha(alpha, data: ProblemData, min_refine: int, refine: int):
    """Quadrature times plus alpha values on them."""
    m = data.m
    base_points = max(refine * m + 1, min_refine + 1)
    if np.isscalar(alpha):
        a = float(alpha)
        times = np.linspace(0.0, data.T, base_points)
        return times, np.full(base_points, a)
    if isinstance(alpha, tuple):
        a_grid = np.asarray(alpha[0], dtype=float)
        a_vals = np.asarray(alpha[1], dtype=float)
        if a_grid.shape != a_vals.shape or a_grid.ndim != 1:
            raise ValueError("alpha path must be (times, values) of equal length")
        if abs(a_grid[0]) > 1e-12 or abs(a_grid[-1] - data.T) > 1e-12 * max(1.0, data.T):
            raise ValueError("alpha path must span [0, T]")
        n_pts = max(a_grid.size, base_points)
        step = a_grid[1] - a_grid[0]
        uniform = np.max(np.abs(np.diff(a_grid) - step)) <= 1e-12 * max(1.0, data.T)
        if uniform and a_grid.size == n_pts:
            return a_grid, a_vals
        times = np.linspace(0.0, data.T, n_pts)
        return times, np.interp(times, a_grid, a_vals)
    a_vals = np.asarray(alpha, dtype=float)
    if a_vals.shape != data.grid.shape:
        raise ValueError("alpha array must be sampled on the problem grid")
    times = np.linspace(0.0, data.T, base_points)
    return times, np.interp(times, data.grid, a_vals)


def certify_scalar_comparison(
    data: ProblemData,
    alpha,
    eps_pos: float = DEFAULT_EPS_POS,
    refine: int = 4,
    min_refine: int = 2048,
) -> Certificate:
    """Scalar comparison-function certificate.

    Solves the linear comparison ODE for phi in closed form,
    phi(t) = Phi(t,T) lam_min(N) + integral_t^T Phi(t,s) lam_min(Q(s)) ds with
    Phi(t,s) = exp(integral_t^s lam_min(Upsilon(alpha))), by composite
    quadrature on a grid at least ``refine`` times finer than the coefficient
    grid.  Certified when phi stays positive and the control weight clears the
    admissible lower bound -alpha phi sum_i D_i'D_i with a positive margin.

    Parameters
    ----------
    alpha : float, (times, values) pair, or array on the problem grid
        Tuning path with values in [0, 1).
    """
    times, a_vals = _normalize_alpha(alpha, data, min_refine, refine)
    if np.any(a_vals < 0.0) or np.any(a_vals >= 1.0):
        raise ValueError("alpha values must lie in [0, 1)")
    h = times[1] - times[0]

    A_, B_, C_, D_, R_, Q_ = data.stacked_at(times)
    sumDtD = np.einsum("itpq,itpr->tqr", D_, D_)
    dd_eigs = batched_min_eig(symmetrize(sumDtD))
    if float(np.min(dd_eigs)) < eps_pos:
        j = int(np.argmin(dd_eigs))
        raise PreconditionFailed(
            f"sum_i D_i'D_i not uniformly positive (min eigenvalue "
            f"{dd_eigs[j]:.3e} at t={times[j]:.6g})"
        )

    M = B_ + np.einsum("itpq,itpr->tqr", C_, D_)  # B + sum C_i'D_i, (t, n, k)
    sol = np.linalg.solve(symmetrize(sumDtD), np.swapaxes(M, -1, -2))
    quad = np.einsum("tnk,tkr->tnr", M, sol)
    ups = A_ + np.swapaxes(A_, -1, -2) + np.einsum("itpq,itpr->tqr", C_, C_)
    ups = ups - quad / (1.0 - a_vals)[:, None, None]
    upsilon = batched_min_eig(symmetrize(ups))
    qmin = batched_min_eig(Q_)
    nu = min_eigenvalue(data.N)

    I = _cumtrapz(upsilon, h)
    w = np.exp(I - np.max(I))
    wq = w * qmin
    panels = 0.5 * h * (wq[1:] + wq[:-1])
    Jrev = np.zeros_like(wq)
    Jrev[:-1] = np.cumsum(panels[::-1])[::-1]
    with np.errstate(over="raise", invalid="raise"):
        phi = (w[-1] * nu + Jrev) / w
    if not np.all(np.isfinite(phi)):
        raise ValueError("phi evaluation overflowed; coefficients out of desk scale")

    if float(np.min(phi)) <= 0.0:
        bad = np.flatnonzero(phi <= 0.0)
        raise PhiNonpositive(float(times[bad[-1]]))

    aphi = a_vals * phi
    adm = batched_min_eig(R_ + aphi[:, None, None] * sumDtD)
    eps = float(np.min(adm))
    j = int(np.argmin(adm))
    threshold = -float(np.min(aphi * dd_eigs))

    # store witness paths on the coarse problem grid
    phi_coarse = np.interp(data.grid, times, phi)
    alpha_coarse = np.interp(data.grid, times, a_vals)
    Dg = np.stack([di.at(data.grid) for di in data.D])
    sumDtD_coarse = np.einsum("itpq,itpr->tqr", Dg, Dg)
    boundary = -(alpha_coarse * phi_coarse)[:, None, None] * sumDtD_coarse

    common = dict(
        kind=KIND_SCALAR_COMPARISON,
        phi_grid=data.grid.copy(),
        phi=phi_coarse,
        alpha=alpha_coarse,
        boundary=boundary,
        threshold=threshold,
    )
    if eps > 0.0:
        return Certificate(verdict=CERTIFIED, epsilon=eps, **common)
    return Certificate(
        verdict=FAILED,
        epsilon=0.0,
        reason="control weight does not clear the admissible lower bound",
        t_worst=float(times[j]),
        **common,
    )


def optimal_constant_alpha() -> float:
    """Terminal alpha of the constant-threshold schedule on unit horizon.

    The unique root in (0, 1) of alpha - ln(alpha) = 2; the sharp admissible
    lower bound for the scalar benchmark weight is its negative, about
    -0.15859.
    """
    return brentq(lambda a: a - np.log(a) - 2.0, 1e-12, 0.999999, xtol=1e-15, rtol=8.9e-16)


@lru_cache(maxsize=4)
def _constant_threshold_schedule_cached(n_points: int, cap: float):
    times = np.linspace(0.0, 1.0, n_points)
    lo = np.full(n_points, 1e-12)
    hi = np.ones(n_points)
    target = 1.0 + times
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        too_small = mid - np.log(mid) > target  # root is larger
        lo = np.where(too_small, mid, lo)
        hi = np.where(too_small, hi, mid)
    alpha = np.minimum(0.5 * (lo + hi), 1.0 - cap)
    times.setflags(write=False)
    alpha.setflags(write=False)
    return times, alpha


def constant_threshold_alpha_schedule(n_points: int = 2 ** 18 + 1, cap: float = 1e-3):
    """The alpha path on [0, 1] that makes the admissible bound time-constant.

    Inverts t(alpha) = alpha - ln(alpha) - 1 on the decreasing branch
    alpha in (0, 1) by bisection per time point.  The exact schedule touches
    alpha = 1 at t = 0 (an integrable endpoint singularity of the comparison
    ODE); values are capped at 1 - ``cap`` so the quadrature in
    certify_scalar_comparison stays finite.  Returns (times, values).
    """
    return _constant_threshold_schedule_cached(int(n_points), float(cap))


def certify_definite_regime(data: ProblemData, eps_pos: float = DEFAULT_EPS_POS) -> Certificate:
    """Classical definite-regime certificates.

    Case i: R uniformly positive with Q, N positive semi-definite.
    Case ii: N uniformly positive, sum_i D_i'D_i uniformly positive, and
    Q, R positive semi-definite; certified by delegating to the scalar
    comparison criterion with a small constant alpha.
    """
    r_eigs = batched_min_eig(data.R.samples)
    q_eigs = batched_min_eig(data.Q.samples)
    r_min = float(np.min(r_eigs))
    q_min = float(np.min(q_eigs))
    n_min = min_eigenvalue(data.N)
    scale_r = max(1.0, float(np.max(np.abs(data.R.samples))))
    scale_q = max(1.0, float(np.max(np.abs(data.Q.samples))))
    scale_n = max(1.0, float(np.max(np.abs(data.N))))

    psd_q = q_min >= -PSD_SLACK * scale_q
    psd_n = n_min >= -PSD_SLACK * scale_n
    if r_min > eps_pos and psd_q and psd_n:
        return Certificate(
            kind=KIND_DEFINITE_CONTROL, verdict=CERTIFIED, epsilon=r_min - eps_pos
        )

    reasons = []
    if not (r_min > eps_pos):
        reasons.append(f"case i: control weight not uniformly positive (min {r_min:.3e})")
    if not psd_q:
        reasons.append(f"Q not positive semi-definite (min {q_min:.3e})")
    if not psd_n:
        reasons.append(f"N not positive semi-definite (min {n_min:.3e})")

    psd_r = r_min >= -PSD_SLACK * scale_r
    Dg = np.stack([di.samples for di in data.D])
    dd_eigs = batched_min_eig(np.einsum("itpq,itpr->tqr", Dg, Dg))
    dd_min = float(np.min(dd_eigs))
    if psd_q and psd_r and n_min > eps_pos and dd_min >= eps_pos:
        try:
            inner = certify_scalar_comparison(data, 0.01, eps_pos=eps_pos)
        except (PreconditionFailed, PhiNonpositive) as exc:
            reasons.append(f"case ii: {exc}")
        else:
            if inner.certified:
                inner.kind = KIND_DEFINITE_TERMINAL
                return inner
            reasons.append(f"case ii: {inner.reason}")
    else:
        reasons.append(
            "case ii: needs N >> 0, sum D_i'D_i >> 0 and Q, R >= 0 "
            f"(min eig N {n_min:.3e}, min eig sum D'D {dd_min:.3e})"
        )
    return Certificate(
        kind=KIND_DEFINITE_CONTROL, verdict=FAILED, epsilon=0.0, reason="; ".join(reasons)
    )


def _as_sym_path_samples(K, grid, n, name):
    K = np.asarray(K, dtype=float)
    if K.ndim == 2:
        K = np.broadcast_to(K, (grid.size, n, n)).copy()
    if K.shape != (grid.size, n, n):
        raise GridMismatch(f"{name} must be sampled on the problem grid")
    if symmetric_part_error(K) > 1e-10 * max(1.0, float(np.max(np.abs(K)))):
        raise ValueError(f"{name} must be symmetric")
    return symmetrize(K)


def apply_shift(data: ProblemData, K, dK=None):
    """Shift the weights by a compensating path K.

    Returns ``(shifted_data, residual)`` where the shifted problem has
    Q_hat = Q + dK + A'K + KA + sum_i C_i'K C_i, R_hat = R + sum_i D_i'K D_i,
    N_hat = N - K(T), and ``residual`` is the maximal Frobenius norm of
    K B + sum_i C_i'K D_i over the grid.  The shift is certificate-valid only
    when the residual vanishes (to tolerance): then P solves the shifted
    problem iff P + K solves the original one.

    ``dK`` defaults to central differences of K on the grid.
    """
    grid = data.grid
    K = _as_sym_path_samples(K, grid, data.n, "K")
    if dK is None:
        dK = np.gradient(K, grid[1] - grid[0], axis=0)
    else:
        dK = _as_sym_path_samples(dK, grid, data.n, "dK")

    A_, B_, C_, D_, R_, Q_ = data.stacked_at(grid)
    AtK = np.einsum("tpq,tpr->tqr", A_, K)  # A'K
    Q_hat = Q_ + dK + AtK + np.swapaxes(AtK, -1, -2)
    Q_hat = Q_hat + np.einsum("itpq,itpr->tqr", C_, np.einsum("tpr,itrs->itps", K, C_))
    R_hat = R_ + np.einsum("itpq,itpr->tqr", D_, np.einsum("tpr,itrs->itps", K, D_))
    N_hat = data.N - K[-1]

    defect = np.einsum("tpq,tqr->tpr", K, B_) + np.einsum(
        "itqp,itqr->tpr", C_, np.einsum("tqs,itsr->itqr", K, D_)
    )
    residual = float(np.max(np.sqrt(np.sum(defect * defect, axis=(-2, -1)))))

    shifted = data.with_weights(R=symmetrize(R_hat), Q=symmetrize(Q_hat), N=N_hat)
    return shifted, residual


def shift_solution_back(
    solution: RiccatiSolution, K, original_data: ProblemData
) -> RiccatiSolution:
    """Recover the original-problem trajectory P + K from a shifted solve."""
    K = _as_sym_path_samples(K, original_data.grid, original_data.n, "K")
    K_path = CoefficientPath(original_data.grid, K)
    P = solution.P + K_path.at(solution.grid)
    gain, margin = derive_gain_margin(original_data, solution.grid, P)
    return RiccatiSolution(
        grid=solution.grid.copy(),
        P=symmetrize(P),
        gain=gain,
        margin=margin,
        status=solution.status,
        t_event=solution.t_event,
        accepted_steps=solution.accepted_steps,
        rejected_steps=solution.rejected_steps,
        margin_min_dense=float(np.min(margin)),
    )
