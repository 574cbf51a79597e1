"""Command-line interface: solve, maximin, eval, slice, apply, bench.

Exit codes: 0 success, 2 validation error, 3 solver non-convergence,
4 certificate failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .baselines import baseline_by_name
from .discovery import apply_policies, read_dataset
from .evaluate import error_rate, power, region_slice
from .maximin import MaximinSpec, solve_maximin
from .policy import load_policy, save_policy
from .problem import ProblemSpec
from .quadrature import QuadConfig, mc_summary
from .solver import SearchConfig, SolverError, duality_certificate, solve

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3
EXIT_CERTIFICATE = 4

BASELINE_NAMES = ("holm", "sidak", "bh", "mabh", "closed-stouffer")


def _add_shared(p: argparse.ArgumentParser):
    p.add_argument("--k", type=int, default=3, help="number of hypotheses")
    p.add_argument("--alpha", type=float, default=0.05, help="error-control level")
    p.add_argument("--error", choices=("fwer", "fdr"), default="fwer")
    p.add_argument("--power", choices=("avg", "any"), default="avg")
    p.add_argument("--L", type=int, default=None, help="false nulls in the average-power objective")
    p.add_argument("--theta-obj", type=float, default=-1.0, help="objective signal (negative shift)")
    p.add_argument("--theta-con", type=float, default=None, help="constraint signal (defaults to objective)")
    p.add_argument("--out", type=Path, default=None, help="output path (JSON or CSV per subcommand)")
    p.add_argument("--quad", choices=("grid", "qmc", "mc"), default="grid")
    p.add_argument("--grid-n", type=int, default=240, help="outer-axis resolution of the grid scheme")
    p.add_argument("--mc-n", type=int, default=1_000_000, help="samples for the mc schemes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=5e-4, help="feasibility/solve tolerance")
    p.add_argument("--threads", type=int, default=1, help="accepted for interface stability; evaluation is vectorized")


def _quad_from(args) -> QuadConfig:
    return QuadConfig(scheme=args.quad, grid_n=args.grid_n, n_samples=args.mc_n,
                      seed=args.seed, target_tol=args.tol)


def _search_from(args) -> SearchConfig:
    return SearchConfig(feas_tol=args.tol, solve_tol=args.tol, seed=args.seed)


def _spec_from(args) -> ProblemSpec:
    return ProblemSpec(k=args.k, alpha=args.alpha, error=args.error, power=args.power,
                       L=args.L, theta_obj=args.theta_obj, theta_con=args.theta_con)


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text if text.endswith("\n") else text + "\n")


def _load_procedure(name: str, args, policy_paths: dict):
    if name in BASELINE_NAMES:
        return baseline_by_name(name, args.k, args.alpha)
    if name in policy_paths:
        return load_policy(policy_paths[name])
    raise ValueError(f"unknown procedure {name!r}; baselines are {BASELINE_NAMES} "
                     "and solved policies are referenced as name=path.json")


def cmd_solve(args) -> int:
    spec = _spec_from(args)
    report = solve(spec, quad=_quad_from(args), search=_search_from(args))
    _emit(report.to_json(), args.report)
    if args.out is not None:
        from .policy import OmtPolicy

        pol = OmtPolicy.from_multipliers(spec, report.mu_star, provenance="solved")
        pol.report_ = report
        save_policy(pol, args.out)
    if args.certify:
        cert = duality_certificate(report)
        sys.stderr.write(f"duality gap {cert.gap:.3e}, certified={cert.certified}\n")
        if not cert.certified:
            return EXIT_CERTIFICATE
    return EXIT_OK


def cmd_maximin(args) -> int:
    base = _spec_from(args)
    mspec = MaximinSpec(base=base, theta_grid=tuple(args.theta_grid or ()))
    policy, report = solve_maximin(mspec, quad=_quad_from(args), search=_search_from(args),
                                   verbose=args.verbose)
    _emit(report.to_json(), args.report)
    if args.out is not None:
        save_policy(policy, args.out)
    if not report.certified:
        sys.stderr.write("certificate withheld: verification grid found violations\n")
        return EXIT_CERTIFICATE
    return EXIT_OK


def cmd_eval(args) -> int:
    policy_paths = dict(kv.split("=", 1) for kv in args.policy or [])
    pol = _load_procedure(args.procedure, args, policy_paths)
    quad = _quad_from(args)
    thetas = args.theta
    out = {"procedure": args.procedure, "thetas": thetas}
    if quad.scheme == "mc":
        h = [1] * (args.L or pol.k) + [0] * (pol.k - (args.L or pol.k))
        summary = mc_summary(pol, h, thetas, rho=args.rho, n=quad.n_samples, seed=quad.seed)
        out.update({key: {"value": v, "se": s} for key, (v, s) in summary.items()})
    else:
        rep = power(pol, thetas, L=args.L, quad=quad)
        out.update(rep.to_dict())
        for L in range(pol.k):
            h = [1] * L + [0] * (pol.k - L)
            th = thetas[:L] if len(thetas) >= L else [thetas[0]] * L
            out[f"err_L{L}"] = error_rate(pol, h, th, args.error, quad=quad)
    _emit(json.dumps(out, indent=2), args.out)
    return EXIT_OK


def cmd_slice(args) -> int:
    policy_paths = dict(kv.split("=", 1) for kv in args.policy or [])
    pol = _load_procedure(args.procedure, args, policy_paths)
    sl = region_slice(pol, args.u1, n=args.n, policy_id=args.procedure)
    _emit(sl.to_csv(), args.out)
    return EXIT_OK


def cmd_apply(args) -> int:
    dataset = read_dataset(args.data)
    args.k = dataset.k
    policy_paths = dict(kv.split("=", 1) for kv in args.policy or [])
    policies = {}
    for name in args.procedures:
        policies[name] = _load_procedure(name, args, policy_paths)
    report = apply_policies(dataset, policies)
    _emit(report.to_json(), args.out)
    if args.rows_csv is not None:
        _emit(report.rows_csv(), args.rows_csv)
    return EXIT_OK


def cmd_bench(args) -> int:
    if not args.procedures:
        raise ValueError("bench requires at least one procedure")
    quad = _quad_from(args)
    policy_paths = dict(kv.split("=", 1) for kv in args.policy or [])
    lines = ["procedure,theta,avg_power,any_power"]
    for theta in args.theta_grid:
        for name in args.procedures:
            if name == "omt":
                spec = _spec_from(args).with_thetas(theta, theta)
                report = solve(spec, quad=quad, search=_search_from(args))
                from .policy import OmtPolicy

                pol = OmtPolicy.from_multipliers(spec, report.mu_star)
            else:
                pol = _load_procedure(name, args, policy_paths)
            rep = power(pol, theta, quad=quad)
            lines.append(f"{name},{theta:.6g},{rep.avg_power:.6g},{rep.any_power:.6g}")
    _emit("\n".join(lines), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="omt", description="Optimal multiple-testing policies")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance and emit report/policy JSON")
    _add_shared(p)
    p.add_argument("--report", type=Path, default=None, help="solve-report JSON path (default stdout)")
    p.add_argument("--certify", action="store_true", help="recompute the duality certificate")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("maximin", help="search the least-favorable constraint signal and certify")
    _add_shared(p)
    p.add_argument("--report", type=Path, default=None, help="maximin-report JSON path (default stdout)")
    p.add_argument("--theta-grid", type=float, nargs="*", default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_maximin)

    p = sub.add_parser("eval", help="power and error rates of a procedure")
    _add_shared(p)
    p.add_argument("--procedure", required=True)
    p.add_argument("--policy", action="append", metavar="NAME=PATH", help="solved policy JSON to reference")
    p.add_argument("--theta", type=float, nargs="+", required=True)
    p.add_argument("--rho", type=float, default=0.0, help="equicorrelation for the mc scheme")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("slice", help="export a 2-d slice of a rejection region as CSV")
    _add_shared(p)
    p.add_argument("--procedure", required=True)
    p.add_argument("--policy", action="append", metavar="NAME=PATH")
    p.add_argument("--u1", type=float, required=True, help="fixed smallest p-value")
    p.add_argument("--n", type=int, default=512, help="slice resolution")
    p.set_defaults(fn=cmd_slice)

    p = sub.add_parser("apply", help="apply procedures to a p-value/z-score CSV")
    _add_shared(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--procedures", nargs="+", required=True)
    p.add_argument("--policy", action="append", metavar="NAME=PATH")
    p.add_argument("--rows-csv", type=Path, default=None, help="also write per-row decisions CSV")
    p.set_defaults(fn=cmd_apply)

    p = sub.add_parser("bench", help="power table across a signal grid")
    _add_shared(p)
    p.add_argument("--procedures", nargs="*", default=())
    p.add_argument("--policy", action="append", metavar="NAME=PATH")
    p.add_argument("--theta-grid", type=float, nargs="+", required=True)
    p.set_defaults(fn=cmd_bench)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except SolverError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NO_CONVERGENCE
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
