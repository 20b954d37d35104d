"""Command-line front end.

Subcommands: test, estimate, simulate, power, samplesize.  JSON output
carries the full effective configuration; floats are written with 17
significant digits so reruns are diffable.  Exit codes: 0 the command
ran, 2 usage/input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import dual_divergence as dd
from .copulas import available_families, get_model
from .dual_divergence import DualCriterion
from .empirical import make_pseudo
from .inference import independence_test, pseudo_mle_and_Sn, power_approx, sample_size
from .simharness import simulate_estimator, simulate_null, simulate_power

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, bool) or value is None:
        return {True: "true", False: "false", None: "null"}[value]
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, dict):
        items = ", ".join(f"{_fmt(str(k))}: {_fmt(v)}" for k, v in value.items())
        return "{" + items + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, np.floating):
        return format(float(value), ".17g")
    raise TypeError(f"cannot serialize {type(value)}")


def dump_json(obj) -> str:
    return _fmt(obj) + "\n"


def _write_out(text: str, path: str | None):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def read_pairs_csv(path: str) -> np.ndarray:
    """Two-column CSV, header optional; malformed rows reported by line."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{lineno}: expected 2 columns, found {len(parts)}"
                )
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: non-numeric row {parts!r}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows)


def _parse_theta(text: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.split(",")])
    except ValueError:
        raise ValueError(f"cannot parse theta {text!r} (comma-separated decimals)") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="copindep",
        description="Independence tests in bivariate copula models via the "
                    "dual chi-square-divergence criterion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_engine_flags(p):
        p.add_argument("--quad-order", type=int, default=64)
        p.add_argument("--engine", choices=("quadrature", "mc"), default="quadrature")
        p.add_argument("--mc-points", type=int, default=100_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output path (default stdout)")

    p_test = sub.add_parser("test", help="run the independence test on CSV data")
    p_test.add_argument("--in", dest="infile", required=True)
    p_test.add_argument("--family", required=True, choices=available_families())
    p_test.add_argument("--alpha", type=float, default=0.05)
    p_test.add_argument("--no-variances", action="store_true")
    add_engine_flags(p_test)

    p_est = sub.add_parser("estimate", help="dual and pseudo-likelihood estimates")
    p_est.add_argument("--in", dest="infile", required=True)
    p_est.add_argument("--family", required=True, choices=available_families())
    add_engine_flags(p_est)

    p_sim = sub.add_parser("simulate", help="seeded Monte Carlo study")
    p_sim.add_argument("--family", required=True, choices=available_families())
    p_sim.add_argument("--mode", choices=("null", "power", "estimator"), default="null")
    p_sim.add_argument("--theta", default=None, help="comma-separated true theta")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--reps", type=int, required=True)
    p_sim.add_argument("--alpha", type=float, default=0.05)
    p_sim.add_argument("--threads", type=int, default=1)
    p_sim.add_argument("--ecdf-out", default=None, help="path for the ECDF CSV (null mode)")
    add_engine_flags(p_sim)

    p_pow = sub.add_parser("power", help="approximate power at an alternative")
    p_pow.add_argument("--family", required=True, choices=available_families())
    p_pow.add_argument("--theta", required=True)
    p_pow.add_argument("--n", type=int, required=True)
    p_pow.add_argument("--alpha", type=float, default=0.05)
    p_pow.add_argument("--paper-variance-convention", action="store_true")
    add_engine_flags(p_pow)

    p_ss = sub.add_parser("samplesize", help="sample size for a target power")
    p_ss.add_argument("--family", required=True, choices=available_families())
    p_ss.add_argument("--theta", required=True)
    p_ss.add_argument("--alpha", type=float, default=0.05)
    p_ss.add_argument("--beta", type=float, default=0.9)
    p_ss.add_argument("--paper-variance-convention", action="store_true")
    add_engine_flags(p_ss)

    return parser


def _effective_config(args, extra=None):
    cfg = {
        "command": args.command,
        "family": getattr(args, "family", None),
        "quad_order": args.quad_order,
        "engine": args.engine,
        "mc_points": args.mc_points,
        "seed": args.seed,
    }
    if extra:
        cfg.update(extra)
    return cfg


def cmd_test(args) -> int:
    data = read_pairs_csv(args.infile)
    report = independence_test(
        data, args.family, alpha=args.alpha, quad_order=args.quad_order,
        engine=args.engine, mc_points=args.mc_points, seed=args.seed,
        with_variances=not args.no_variances,
    )
    payload = report.to_dict()
    payload["config"] = _effective_config(args, {"alpha": args.alpha, "in": args.infile})
    _write_out(dump_json(payload), args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    data = read_pairs_csv(args.infile)
    model = get_model(args.family)
    dc = DualCriterion(model, quad_order=args.quad_order, engine=args.engine,
                       mc_points=args.mc_points, seed=args.seed)
    ps = make_pseudo(data)
    res = dd.estimate(dc, ps)
    pml = pseudo_mle_and_Sn(data, args.family)
    payload = {
        "family": args.family,
        "dual": {
            "theta_hat": list(map(float, res.theta_hat)),
            "criterion_value": res.criterion_value,
            "criterion_raw": res.criterion_raw,
            "score_stat": res.score_stat,
            "iterations": res.iterations,
            "converged": res.converged,
            "gradient_norm": res.gradient_norm,
            "boundary_flag": res.boundary_flag,
        },
        "pseudo_mle": pml.to_dict(),
        "n": ps.n,
        "config": _effective_config(args, {"in": args.infile}),
    }
    _write_out(dump_json(payload), args.out)
    return EXIT_OK


def _ecdf_csv(summary) -> str:
    lines = ["t,ecdf,chi2_cdf"]
    for t, e, c in summary.ecdf_table():
        lines.append(f"{t:.17g},{e:.17g},{c:.17g}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    theta = _parse_theta(args.theta) if args.theta is not None else None
    if args.mode == "null":
        summary = simulate_null(
            args.family, args.n, args.reps, args.seed,
            alphas=(args.alpha,), threads=args.threads, quad_order=args.quad_order,
        )
        payload = summary.to_dict()
        if args.ecdf_out:
            _write_out(_ecdf_csv(summary), args.ecdf_out)
    elif args.mode == "power":
        if theta is None:
            raise ValueError("--theta is required for mode=power")
        result = simulate_power(
            args.family, theta, args.n, args.reps, args.seed,
            alpha=args.alpha, threads=args.threads, quad_order=args.quad_order,
        )
        payload = result.to_dict()
    else:
        if theta is None:
            raise ValueError("--theta is required for mode=estimator")
        result = simulate_estimator(
            args.family, theta, args.n, args.reps, args.seed,
            threads=args.threads, quad_order=args.quad_order,
        )
        payload = result.to_dict()
    payload["config"] = _effective_config(args, {
        "mode": args.mode, "n": args.n, "reps": args.reps,
        "alpha": args.alpha, "threads": args.threads,
        "theta": list(map(float, theta)) if theta is not None else None,
    })
    _write_out(dump_json(payload), args.out)
    return EXIT_OK


def cmd_power(args) -> int:
    theta = _parse_theta(args.theta)
    beta = power_approx(
        theta, args.family, args.n, alpha=args.alpha, quad_order=args.quad_order,
        paper_variance_convention=args.paper_variance_convention,
    )
    payload = {
        "family": args.family,
        "theta_alt": list(map(float, theta)),
        "n": args.n,
        "alpha": args.alpha,
        "power": beta,
        "config": _effective_config(args, {
            "paper_variance_convention": args.paper_variance_convention,
        }),
    }
    _write_out(dump_json(payload), args.out)
    return EXIT_OK


def cmd_samplesize(args) -> int:
    theta = _parse_theta(args.theta)
    plan = sample_size(
        theta, args.family, alpha=args.alpha, beta_target=args.beta,
        quad_order=args.quad_order,
        paper_variance_convention=args.paper_variance_convention,
    )
    payload = plan.to_dict()
    payload["config"] = _effective_config(args, {
        "alpha": args.alpha, "beta": args.beta,
        "paper_variance_convention": args.paper_variance_convention,
    })
    _write_out(dump_json(payload), args.out)
    return EXIT_OK


_DISPATCH = {
    "test": cmd_test,
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "power": cmd_power,
    "samplesize": cmd_samplesize,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return _DISPATCH[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
