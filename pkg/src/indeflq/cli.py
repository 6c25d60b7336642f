"""Command-line surface: solve, certify, simulate, oracle, example.

Exit codes: 0 success or certified, 1 input error, 2 constraint violation,
3 blow-up, 4 certificate failed.  Reports go to --out (default stdout) as
JSON with 17-significant-digit floats; a one-line summary goes to stderr
unless --quiet.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import bundled
from .certificates import (
    Certificate,
    SubsolutionCandidate,
    apply_shift,
    certify_definite_regime,
    certify_scalar_comparison,
    check_subsolution,
    constant_threshold_alpha_schedule,
)
from .errors import (
    IndefLQError,
    NumericalOverflow,
    PhiNonpositive,
    PreconditionFailed,
    SpecError,
    StepLimit,
)
from .oracle import dp_solve
from .riccati import BLOWUP, COMPLETED, CONSTRAINT_VIOLATION, solve_riccati
from .simulate import ControlPolicy, completing_square_report
from .specio import ParsedSpec, dumps_report, load_spec_file

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONSTRAINT = 2
EXIT_BLOWUP = 3
EXIT_CERT_FAILED = 4

_STATUS_EXIT = {
    COMPLETED: EXIT_OK,
    CONSTRAINT_VIOLATION: EXIT_CONSTRAINT,
    BLOWUP: EXIT_BLOWUP,
}


def _empty_report():
    return {
        "status": None,
        "P0": None,
        "value_at_xi": None,
        "margin_min": None,
        "certificate": None,
        "simulation": None,
        "oracle": None,
        "timings": {},
    }


def _emit(report, out_path, quiet, summary):
    text = dumps_report(report)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if not quiet:
        print(summary, file=sys.stderr)


def _solution_into(report, sol):
    report["status"] = sol.status
    report["margin_min"] = sol.margin_min_dense
    if sol.t_event is not None:
        report["t_event"] = sol.t_event
    if sol.completed:
        report["P0"] = sol.P0
    report["steps"] = {"accepted": sol.accepted_steps, "rejected": sol.rejected_steps}


def _certificate_into(report, cert: Certificate):
    report["certificate"] = {
        "kind": cert.kind,
        "verdict": cert.verdict,
        "epsilon": cert.epsilon,
        "reason": cert.reason,
        "t_worst": cert.t_worst,
        "threshold": cert.threshold,
    }


def cmd_solve(spec: ParsedSpec, report, args) -> int:
    t0 = time.perf_counter()
    sol = solve_riccati(spec.data, spec.solver)
    report["timings"]["solve"] = time.perf_counter() - t0
    _solution_into(report, sol)
    if sol.completed and spec.xi is not None:
        report["value_at_xi"] = sol.value_at(spec.xi)
    summary = f"solve: {sol.status}"
    if sol.t_event is not None:
        summary += f" at t*={sol.t_event:.6g}"
    _emit(report, args.out, args.quiet, summary)
    return _STATUS_EXIT[sol.status]


def _run_certificate(spec: ParsedSpec) -> Certificate:
    block = spec.certificate
    kind = block["kind"]
    data = spec.data
    if kind == "scalar-comparison":
        alpha = block.get("alpha")
        if alpha is None:
            raise SpecError("certificate.alpha is required for kind scalar-comparison")
        if isinstance(alpha, str):
            if alpha != "optimal-constant":
                raise SpecError(f"certificate.alpha: unknown schedule {alpha!r}")
            if abs(data.T - 1.0) > 1e-12:
                raise SpecError("the optimal-constant alpha schedule needs horizon T = 1")
            alpha = constant_threshold_alpha_schedule()
        elif isinstance(alpha, (list, tuple, np.ndarray)):
            alpha = np.asarray(alpha, dtype=float)
        else:
            alpha = float(alpha)
        return certify_scalar_comparison(data, alpha, eps_pos=spec.solver.eps_pos)
    if kind == "definite":
        return certify_definite_regime(data, eps_pos=spec.solver.eps_pos)
    if kind == "explicit-subsolution":
        tol = float(block.get("tol", 1e-9))
        F = block.get("F")
        dF = block.get("dF")
        if F is None:
            cand = SubsolutionCandidate.zero(data)
        else:
            F_s = np.asarray(F, dtype=float)
            dF_s = None if dF is None else np.asarray(dF, dtype=float)
            cand = SubsolutionCandidate(grid=data.grid, F=F_s, dF=dF_s)
        return check_subsolution(cand, data, tol=tol, eps_pos=spec.solver.eps_pos)
    if kind == "shift":
        K = block.get("K")
        if K is None:
            raise SpecError("certificate.K is required for kind shift")
        tol = float(block.get("tol", 1e-8))
        shifted, residual = apply_shift(data, np.asarray(K, dtype=float))
        if residual > tol:
            return Certificate(
                kind="shift",
                verdict="failed",
                epsilon=0.0,
                reason=f"compensation residual {residual:.3e} exceeds {tol:.1e}",
            )
        inner = certify_definite_regime(shifted, eps_pos=spec.solver.eps_pos)
        return Certificate(
            kind="shift",
            verdict=inner.verdict,
            epsilon=inner.epsilon,
            reason=None if inner.certified else f"shifted problem: {inner.reason}",
            t_worst=inner.t_worst,
        )
    raise SpecError(f"certificate.kind {kind!r} not supported")


def cmd_certify(spec: ParsedSpec, report, args) -> int:
    if spec.certificate is None:
        raise SpecError("spec has no certificate block")
    t0 = time.perf_counter()
    try:
        cert = _run_certificate(spec)
    except (PreconditionFailed, PhiNonpositive) as exc:
        kind = spec.certificate.get("kind")
        cert = Certificate(kind=kind, verdict="failed", epsilon=0.0, reason=str(exc),
                           t_worst=getattr(exc, "time", None))
    report["timings"]["certify"] = time.perf_counter() - t0
    _certificate_into(report, cert)
    report["status"] = cert.verdict
    _emit(report, args.out, args.quiet,
          f"certify: {cert.verdict} (kind {cert.kind}, epsilon {cert.epsilon:.6g})")
    return EXIT_OK if cert.certified else EXIT_CERT_FAILED


def cmd_simulate(spec: ParsedSpec, report, args) -> int:
    if spec.simulation is None:
        raise SpecError("spec has no simulation block")
    t0 = time.perf_counter()
    sol = solve_riccati(spec.data, spec.solver)
    report["timings"]["solve"] = time.perf_counter() - t0
    _solution_into(report, sol)
    if not sol.completed:
        _emit(report, args.out, args.quiet, f"simulate: solver stopped ({sol.status})")
        return _STATUS_EXIT[sol.status]
    report["value_at_xi"] = sol.value_at(spec.xi)
    policy = ControlPolicy.from_solution(sol)
    t0 = time.perf_counter()
    rep = completing_square_report(spec.data, sol, policy, spec.xi, spec.simulation)
    report["timings"]["simulate"] = time.perf_counter() - t0
    report["simulation"] = {
        "cost_mean": rep.cost_mean,
        "cost_stderr": rep.cost_stderr,
        "n_paths": rep.n_paths,
        "cs_lhs": rep.cs_lhs,
        "cs_rhs": rep.cs_rhs,
        "cs_residual": rep.cs_residual,
        "cs_stderr": rep.cs_stderr,
    }
    _emit(report, args.out, args.quiet,
          f"simulate: cost {rep.cost_mean:.6g} +- {rep.cost_stderr:.2g}, "
          f"value {report['value_at_xi']:.6g}, cs residual {rep.cs_residual:.3g}")
    return EXIT_OK


def cmd_oracle(spec: ParsedSpec, report, args) -> int:
    try:
        steps = [int(s) for s in args.steps.split(",") if s.strip()]
    except ValueError:
        raise SpecError(f"--steps: expected comma-separated integers, got {args.steps!r}")
    if not steps:
        raise SpecError("--steps: empty list")
    t0 = time.perf_counter()
    sol = solve_riccati(spec.data, spec.solver)
    report["timings"]["solve"] = time.perf_counter() - t0
    _solution_into(report, sol)
    if not sol.completed:
        _emit(report, args.out, args.quiet, f"oracle: solver stopped ({sol.status})")
        return _STATUS_EXIT[sol.status]
    rows = []
    t0 = time.perf_counter()
    for ns in steps:
        res = dp_solve(spec.data, ns, eps_pos=spec.solver.eps_pos)
        rows.append({
            "n_steps": ns,
            "delta": res.delta,
            "constraint_ok": res.constraint_ok,
            "P0": res.P0,
            "error_vs_solver": res.error_vs(sol.P0) if res.constraint_ok else None,
        })
    report["timings"]["oracle"] = time.perf_counter() - t0
    errs = [r["error_vs_solver"] for r in rows if r["error_vs_solver"] is not None]
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)] if len(errs) > 1 else []
    report["oracle"] = {"rows": rows, "ratios": ratios}
    _emit(report, args.out, args.quiet,
          f"oracle: {len(rows)} step sizes, ratios {['%.2f' % r for r in ratios]}")
    return EXIT_OK


def cmd_example(args) -> int:
    if args.list or args.name is None:
        for name in bundled.example_names():
            print(name)
        return EXIT_OK if args.list or args.name is None else EXIT_INPUT
    try:
        text = bundled.example_text(args.name)
    except KeyError:
        print(
            f"unknown example {args.name!r}; available: "
            + ", ".join(bundled.example_names()),
            file=sys.stderr,
        )
        return EXIT_INPUT
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{args.name}.yaml"
    path.write_text(text, encoding="utf-8")
    if not args.quiet:
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="indeflq",
        description="Indefinite linear-quadratic stochastic control toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_spec=True):
        if needs_spec:
            p.add_argument("--spec", required=True, help="problem specification file (YAML)")
            p.add_argument("--set", dest="overrides", action="append", default=[],
                           metavar="KEY.PATH=VALUE", help="patch the spec before validation")
        p.add_argument("--out", default=None, help="report path (default: stdout)")
        p.add_argument("--quiet", action="store_true", help="suppress the summary line")

    add_common(sub.add_parser("solve", help="integrate the Riccati problem"))
    add_common(sub.add_parser("certify", help="run the spec's certificate block"))
    add_common(sub.add_parser("simulate", help="Monte Carlo verification of the feedback"))
    p_oracle = sub.add_parser("oracle", help="discrete dynamic-programming cross-check")
    add_common(p_oracle)
    p_oracle.add_argument("--steps", default="64,128,256,512",
                          help="comma-separated step counts (default 64,128,256,512)")
    p_ex = sub.add_parser("example", help="materialize a bundled example spec")
    p_ex.add_argument("name", nargs="?", default=None)
    p_ex.add_argument("--out-dir", default=".", help="directory for the written file")
    p_ex.add_argument("--list", action="store_true", help="list available example names")
    p_ex.add_argument("--quiet", action="store_true")
    return parser


_DISPATCH = {
    "solve": cmd_solve,
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "example":
        return cmd_example(args)
    try:
        spec = load_spec_file(args.spec, args.overrides)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = _empty_report()
    try:
        return _DISPATCH[args.command](spec, report, args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (StepLimit, NumericalOverflow) as exc:
        report["status"] = "error"
        report["error"] = str(exc)
        _emit(report, args.out, args.quiet, f"{args.command}: {exc}")
        return EXIT_INPUT
    except IndefLQError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
