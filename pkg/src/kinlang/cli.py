"""Command-line front end: convergence studies, sampling, self-verification.

Exit codes: 0 success, 1 selftest failure, 2 argument errors, 3 data errors,
4 trajectory divergence.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import harness, selftest
from .harness import DivergenceError, StudyConfig
from .rng import Tag, stream
from .samplers import DynamicsParams, PhaseState
from .targets import DatasetFormatError, LogisticPotential, load_dataset, make_quadratic

EXIT_OK = 0
EXIT_SELFTEST_FAIL = 1
EXIT_ARGS = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4

SEED_ENV = "KINLANG_SEED"
_U64_MAX = 2**64 - 1


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok != ""]
    except ValueError:
        raise ValueError(f"{flag} must be a comma-separated list of numbers, got {text!r}")


def _parse_seed(value) -> int:
    if value is None:
        value = os.environ.get(SEED_ENV, "0")
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise ValueError(f"seed must be a decimal unsigned 64-bit integer, got {value!r}")
    if not (0 <= seed <= _U64_MAX):
        raise ValueError(f"seed must be in [0, 2^64), got {seed}")
    return seed


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", choices=("quadratic", "logistic"), required=True)
    p.add_argument("--dim", type=int, help="dimension of the quadratic target (unit curvatures)")
    p.add_argument("--diag", help="comma-separated curvatures of the quadratic target")
    p.add_argument("--data", help="labeled CSV (label first) for the logistic target")
    p.add_argument("--delta", type=float, default=0.1, help="ridge coefficient of the logistic target")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--u", type=float, default=1.0)
    p.add_argument("--methods", required=True, help="comma-separated method names")
    p.add_argument("--T", type=float, required=True, help="time horizon")
    p.add_argument("--h", required=True, help="comma-separated step sizes, decreasing")
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--seed", help=f"decimal unsigned 64-bit seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", help="output CSV path (default: standard output)")
    p.add_argument("--inner-steps", type=int, default=16, dest="inner_steps")
    p.add_argument("--phase-norm", action="store_true", dest="phase_norm",
                   help="include the velocity difference in the strong-error norm")


def _build_target(args):
    if args.target == "quadratic":
        if args.diag:
            diag = _parse_floats(args.diag, "--diag")
        elif args.dim:
            if args.dim < 1:
                raise ValueError("--dim must be >= 1")
            diag = [1.0] * args.dim
        else:
            raise ValueError("quadratic target needs --dim or --diag")
        return make_quadratic(diag)
    if not args.data:
        raise ValueError("logistic target needs --data")
    loaded = load_dataset(args.data)
    return LogisticPotential(loaded.features, loaded.labels, args.delta)


def _build_config(args, h_grid) -> StudyConfig:
    return StudyConfig(
        target=_build_target(args),
        gamma=args.gamma,
        u=args.u,
        T=args.T,
        h_grid=h_grid,
        n=args.samples,
        seed=_parse_seed(args.seed),
        methods=[m for m in args.methods.split(",") if m],
        inner_steps=args.inner_steps,
        threads=max(1, args.threads),
        phase_norm=args.phase_norm,
    )


def _orders_table(orders) -> str:
    lines = [f"{'method':<14}{'slope':>8}{'r^2':>8}"]
    for method, fit in orders.items():
        lines.append(f"{method:<14}{fit.slope:>8.3f}{fit.r_squared:>8.4f}")
    return "\n".join(lines)


def cmd_study(args) -> int:
    cfg = _build_config(args, _parse_floats(args.h, "--h"))
    # all validation is done; only now may the output file be created
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        out.write(harness.CSV_HEADER + "\n")
        out.flush()

        def sink(row):
            out.write(harness.format_row(row) + "\n")
            out.flush()

        result = harness.run_study(cfg, sink=sink)
    finally:
        if args.out:
            out.close()
    print("fitted strong orders:")
    print(_orders_table(result.orders))
    return EXIT_OK


def cmd_estimate(args) -> int:
    h_grid = _parse_floats(args.h, "--h")
    if len(h_grid) != 1:
        raise ValueError("estimate takes a single --h value")
    cfg = _build_config(args, h_grid)
    if len(cfg.methods) != 1:
        raise ValueError("estimate takes a single method")
    params = DynamicsParams(cfg.gamma, cfg.u)
    row = harness.strong_error(
        cfg.methods[0], cfg.target, params, cfg.T, h_grid[0], cfg.n, cfg.seed,
        inner_steps=cfg.inner_steps, phase_norm=cfg.phase_norm, threads=cfg.threads,
    )
    text = harness.CSV_HEADER + "\n" + harness.format_row(row) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sample(args) -> int:
    """Run one chain and emit thinned post-burn-in positions as CSV."""
    cfg = _build_config(args, _parse_floats(args.h, "--h"))
    if len(cfg.methods) != 1 or len(cfg.h_grid) != 1:
        raise ValueError("sample takes a single method and a single --h value")
    method, h = cfg.methods[0], cfg.h_grid[0]
    params = DynamicsParams(cfg.gamma, cfg.u)
    pot = cfg.target
    d = pot.dim
    n_steps = round(cfg.T / h)
    burn_in = n_steps // 2
    keep = min(cfg.n, n_steps - burn_in)
    if keep < 1:
        raise ValueError("horizon too short for any post-burn-in samples")
    keep_every = (n_steps - burn_in) // keep

    v0 = math.sqrt(params.u) * stream(cfg.seed, 0, 0, Tag.INIT_V).standard_normal(d)
    state = PhaseState(np.zeros(d), v0)
    grad = None
    rows = []
    for k in range(n_steps):
        noise = harness.step_noise(method, params, h, d, cfg.seed, 0, k)
        res = harness._apply_step(method, state, params, pot, h, noise, grad, cfg.inner_steps)
        state, grad = res.state, res.grad_new
        if not np.all(np.abs(state.x) <= harness.DIVERGENCE_LIMIT):
            raise DivergenceError(f"{method}: trajectory exceeded |x| = 1e8 at step {k}")
        if k >= burn_in and (k - burn_in) % keep_every == 0 and len(rows) < keep:
            rows.append(state.x.copy())

    header = ",".join(f"x{i}" for i in range(d))
    lines = [header] + [",".join(repr(float(val)) for val in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = selftest.run_selftest(suite=args.suite, budget=args.budget)
    for res in results:
        print(res.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinlang",
                                     description="Underdamped Langevin integrators and convergence harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_study = sub.add_parser("study", help="strong-error sweep over methods and step sizes")
    _add_common_flags(p_study)
    p_study.set_defaults(func=cmd_study)

    p_est = sub.add_parser("estimate", help="single strong-error point for one method")
    _add_common_flags(p_est)
    p_est.set_defaults(func=cmd_estimate)

    p_sample = sub.add_parser("sample", help="run one chain and emit positions")
    _add_common_flags(p_sample)
    p_sample.set_defaults(func=cmd_sample)

    p_self = sub.add_parser("selftest", help="run the built-in verification suites")
    p_self.add_argument("--suite", choices=("all",) + selftest.SUITE_NAMES, default="all")
    p_self.add_argument("--budget", choices=("fast", "full"), default="full")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DatasetFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ValueError as exc:
        print(f"argument error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
