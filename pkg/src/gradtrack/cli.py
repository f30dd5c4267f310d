"""Command line front end.

Four subcommands: ``run`` executes a single method configuration and writes
the trajectory CSV, ``sweep`` executes the full step-size grid, ``theory``
evaluates or searches the convergence-constant feasibility conditions, and
``benchmark`` drives the analytical quadratic studies.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from gradtrack.harness import (
    ExperimentConfig,
    build_default_config,
    build_model,
    build_sequence,
    convergence_ratios,
    emit_csv,
    emit_plot,
    run_sweep,
)
from gradtrack.method import (
    RunStatus,
    StepKind,
    StepPolicy,
    TrackingKind,
    TrackingVariant,
    init_state,
    iterate,
    rlinear_certificate,
    run,
    trajectory_to_csv,
    uniform_x0,
)
from gradtrack.network import NetworkSequence, theta_mixing
from gradtrack.objective import solve_reference
from gradtrack.theory import (
    FeasibilitySearchError,
    benchmark_instance,
    check_conditions,
    constants,
    quadratic_benchmark,
    search_feasible,
    sigma_recursion,
)

log = logging.getLogger(__name__)


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    else:
        cfg = build_default_config()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "max_iter", None) is not None:
        cfg = replace(cfg, max_iter=args.max_iter)
    return cfg


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    model = build_model(cfg)
    reference = solve_reference(model)
    seq = build_sequence(cfg, stream=0)
    x0 = uniform_x0(model.n, model.d, np.random.default_rng([cfg.seed, 23]))

    d_max = args.d_max if args.d_max is not None else 1.0 / model.L
    kind = TrackingKind(args.variant)
    b = (1.0 / d_max) if kind != TrackingKind.ZERO else 0.0
    tracking = TrackingVariant(kind, b)
    policy = StepPolicy(StepKind(args.policy), d_min=cfg.d_min, d_max=d_max)

    traj = run(model, seq, tracking, policy, x0, cfg.eps, cfg.max_iter, reference=reference)
    summary = {
        "status": traj.status.value,
        "iterations": traj.k_bar if traj.status == RunStatus.CONVERGED else -1,
        "final_err_max": traj.err_max[-1],
        "comm_vectors": traj.comm_vectors,
        "d_max": d_max,
        "variant": kind.value,
        "policy": policy.kind.value,
        "seed": cfg.seed,
    }
    if args.out:
        trajectory_to_csv(traj, args.out)
        summary["trajectory_csv"] = str(args.out)
    print(json.dumps(summary, indent=2))
    return 0 if traj.status != RunStatus.DIVERGED else 1


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.seed + r for r in range(max(args.repeats, 1))]
    summaries = {}
    for seed in seeds:
        cfg_r = replace(cfg, seed=seed)
        result = run_sweep(cfg_r, timing=args.timing)
        stem = f"sweep_seed{seed}"
        emit_csv(result, out_dir / f"{stem}.csv")
        emit_plot(result, out_dir / f"{stem}.svg")
        summaries[str(seed)] = convergence_ratios(result)
        log.info("seed %d done: %d cells", seed, len(result.records))
    print(json.dumps({"out_dir": str(out_dir), "ratios": summaries}, indent=2))
    return 0


def _cmd_theory(args: argparse.Namespace) -> int:
    if args.lam is not None or args.d_min is not None or args.d_max is not None:
        if None in (args.lam, args.d_min, args.d_max):
            print("theory: --lam, --d-min and --d-max must be given together", file=sys.stderr)
            return 2
        try:
            tc = constants(
                args.b, args.mu, args.L, args.nu, args.n, args.m, args.lam, args.d_min, args.d_max
            )
        except ValueError as exc:
            # guard rejection (rate outside (nu, 1), bad interval, ...)
            print(json.dumps({"feasible": False, "error": str(exc)}, indent=2))
            return 1
        report = check_conditions(tc)
        print(
            json.dumps(
                {
                    "constants": tc.as_dict(),
                    "conditions": report.as_dict(),
                    "feasible": report.feasible,
                },
                indent=2,
            )
        )
        return 0 if report.feasible else 1
    try:
        res = search_feasible(args.b, args.mu, args.L, args.nu, args.n, args.m)
    except FeasibilitySearchError as exc:
        doc = {"feasible": False, "error": str(exc)}
        if exc.report is not None:
            doc["last_conditions"] = exc.report.as_dict()
        print(json.dumps(doc, indent=2))
        return 1
    print(res.to_json())
    return 0


def _benchmark_run(study: str, args: argparse.Namespace) -> dict:
    if args.alpha is None:
        args.alpha = 2.5 if study == "diverge" else 0.6
    rng = np.random.default_rng(args.seed)
    model, x0 = benchmark_instance(args.n, rng)
    reference = solve_reference(model)
    tracking = TrackingVariant(TrackingKind.ZERO)

    if study == "converge":
        thetas = rng.uniform(1.0 / 3.0 + 1e-3, 0.75 - 1e-3, size=args.iters)
        seq = NetworkSequence.mixing_from_sequence(args.n, thetas)
        policy = StepPolicy(StepKind.CONSTANT, d_min=args.alpha, d_max=args.alpha)
        traj = run(model, seq, tracking, policy, x0, args.eps, args.iters, reference=reference)
        rho, slope = rlinear_certificate(np.asarray(traj.err_max))
        return {
            "study": study,
            "alpha": args.alpha,
            "status": traj.status.value,
            "iterations": traj.k_bar,
            "final_err_max": traj.err_max[-1],
            "rho": rho,
            "log_slope": slope,
        }
    if study == "diverge":
        seq = NetworkSequence.mixing(args.n, args.theta)
        policy = StepPolicy(StepKind.CONSTANT, d_min=args.alpha, d_max=args.alpha)
        traj = run(model, seq, tracking, policy, x0, args.eps, args.iters, reference=reference)
        system = quadratic_benchmark(args.theta, args.alpha, args.n)
        return {
            "study": study,
            "alpha": args.alpha,
            "theta": args.theta,
            "status": traj.status.value,
            "spectral_radius": system.spectral_radius(),
            "spectral_norm": system.spectral_norm(),
        }
    if study == "saturation":
        thetas = rng.uniform(1.0 / 3.0 + 1e-3, 0.75 - 1e-3, size=args.iters)
        seq = NetworkSequence.mixing_from_sequence(args.n, thetas)
        policy = StepPolicy(
            StepKind.SPECTRAL, d_min=2.0 / 3.0, d_max=float("inf"), sigma0=1.0
        )
        traj = run(model, seq, tracking, policy, x0, args.eps, args.iters, reference=reference)
        sigma = np.asarray(traj.sigma)
        sigma_max = 1.0 / policy.d_min
        # the engine folds theta_k into sigma_k, one index ahead of the
        # closed form, so the exact replay drops the first mixture draw
        closed, closed_idx = sigma_recursion(thetas[1 : len(sigma)], 1.0, sigma_max)
        saturated = None
        if len(sigma) and np.all(sigma[-1] == sigma_max):
            idx = len(sigma) - 1
            while idx > 0 and np.all(sigma[idx - 1] == sigma_max):
                idx -= 1
            saturated = idx
        return {
            "study": study,
            "status": traj.status.value,
            "engine_saturation_index": saturated,
            "closed_form_saturation_index": closed_idx,
            "closed_form_matches_engine": bool(
                np.allclose(sigma, closed[: len(sigma), None], atol=1e-12)
            ),
            "final_err_max": traj.err_max[-1],
        }
    # oracle: engine states against the linear recursion, step by step
    iters = min(args.iters, 50)
    thetas = rng.uniform(1.0 / 3.0 + 1e-3, 0.75 - 1e-3, size=iters)
    y_star = reference.y_star.item()
    system = quadratic_benchmark(thetas[0], args.alpha, args.n)
    states = system.propagate(thetas, x0.ravel() - y_star, model.local_grads(x0).ravel())
    state = init_state(model, x0)
    steps = np.full(args.n, args.alpha)
    sup = float(np.abs(state.x.ravel() - (states[0][: args.n] + y_star)).max())
    for k, th in enumerate(thetas):
        state = iterate(state, theta_mixing(args.n, th), tracking, steps, model)
        x_oracle = states[k + 1][: args.n] + y_star
        sup = max(sup, float(np.abs(state.x.ravel() - x_oracle).max()))
    return {"study": "oracle", "iterations": iters, "sup_difference": sup}


def _cmd_benchmark(args: argparse.Namespace) -> int:
    doc = _benchmark_run(args.study, args)
    print(json.dumps(doc, indent=2))
    if args.study == "converge":
        return 0 if doc["status"] == RunStatus.CONVERGED.value else 1
    if args.study == "diverge":
        return 0 if doc["status"] == RunStatus.DIVERGED.value else 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradtrack",
        description="distributed gradient tracking simulator and analysis tools",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single method configuration")
    p_run.add_argument("--config", help="experiment config JSON file")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--max-iter", type=int, default=None)
    p_run.add_argument(
        "--variant",
        choices=[k.value for k in TrackingKind],
        default=TrackingKind.ZERO.value,
    )
    p_run.add_argument(
        "--policy",
        choices=[k.value for k in StepKind],
        default=StepKind.CONSTANT.value,
    )
    p_run.add_argument("--d-max", type=float, default=None, help="step cap (default 1/L)")
    p_run.add_argument("--out", help="trajectory CSV path")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the full step-size grid")
    p_sweep.add_argument("--config", help="experiment config JSON file")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--max-iter", type=int, default=None)
    p_sweep.add_argument("--out-dir", default="sweep_out")
    p_sweep.add_argument("--repeats", type=int, default=1)
    p_sweep.add_argument("--timing", action="store_true", help="record wall times")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_theory = sub.add_parser("theory", help="feasibility of the safeguard interval")
    p_theory.add_argument("--b", type=float, default=0.0)
    p_theory.add_argument("--mu", type=float, required=True)
    p_theory.add_argument("--L", type=float, required=True)
    p_theory.add_argument("--nu", type=float, required=True)
    p_theory.add_argument("--n", type=int, required=True)
    p_theory.add_argument("--m", type=int, default=1)
    p_theory.add_argument("--lam", type=float, default=None, help="evaluate at this rate")
    p_theory.add_argument("--d-min", type=float, default=None)
    p_theory.add_argument("--d-max", type=float, default=None)
    p_theory.set_defaults(func=_cmd_theory)

    p_bench = sub.add_parser("benchmark", help="analytical quadratic studies")
    p_bench.add_argument(
        "study", choices=["converge", "diverge", "saturation", "oracle"]
    )
    p_bench.add_argument("--n", type=int, default=10)
    p_bench.add_argument(
        "--alpha", type=float, default=None, help="step size (default 0.6; 2.5 for diverge)"
    )
    p_bench.add_argument("--theta", type=float, default=0.5)
    p_bench.add_argument("--iters", type=int, default=2000)
    p_bench.add_argument("--eps", type=float, default=1e-12)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(func=_cmd_benchmark)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
