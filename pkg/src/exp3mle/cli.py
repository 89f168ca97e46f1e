"""Command-line interface.

Subcommands: simulate, estimate, likelihood, kl, bounds, experiment.
Exit codes: 0 on success, 1 on domain errors, 2 on I/O or usage errors.
All randomness is controlled by explicit seeds.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from pathlib import Path

from .core import (
    BanditSpec,
    ConstantRate,
    PolynomialRate,
    RateBounds,
    Trajectory,
    simulate,
)
from .errors import DomainError, Exp3MLEError
from .estimator import OptimizerConfig, mle_constant, mle_truncated
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    likelihood_curve,
    run_experiment,
)
from .likelihood import (
    TruncationConfig,
    empirical_truncation_horizon,
    full_log_likelihood,
    truncated_log_likelihood,
    truncation_horizon,
)
from .svg import render_scatter
from .two_arm import kl_exact, kl_monte_carlo, tetration_margins


def _parse_floats(text: str) -> list:
    try:
        return [float(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise DomainError(f"expected comma-separated numbers, got {text!r}") from exc


def _parse_ints(text: str) -> list:
    return [int(round(v)) for v in _parse_floats(text)]


def _parse_theta(text: str):
    values = _parse_floats(text)
    if len(values) != 2:
        raise DomainError(f"--theta needs two comma-separated values, got {text!r}")
    return values[0], values[1]


def _load_trajectory(path: str) -> Trajectory:
    with open(path, "r", encoding="utf-8") as fh:
        return Trajectory.from_dict(json.load(fh))


def _dump_json(data: dict, out: str | None) -> None:
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _write_text(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _schedule_from_args(args) -> object:
    if args.eta is not None and args.eta0 is not None:
        raise DomainError("give either --eta or --eta0, not both")
    if args.eta is not None:
        return ConstantRate(args.eta)
    if args.eta0 is not None:
        return PolynomialRate(eta0=args.eta0, alpha=args.alpha)
    raise DomainError("a schedule needs --eta or --eta0")


def _cmd_simulate(args) -> int:
    losses = _parse_floats(args.losses)
    if args.k is not None and args.k != len(losses):
        raise DomainError(f"--k {args.k} does not match {len(losses)} losses")
    spec = BanditSpec(losses=tuple(losses))
    schedule = _schedule_from_args(args)
    trajectory = simulate(spec, schedule, args.n, args.seed)
    _dump_json(trajectory.to_dict(), args.out)
    return 0


def _cmd_estimate(args) -> int:
    trajectory = _load_trajectory(args.trajectory)
    lo, hi = _parse_theta(args.theta)
    config = OptimizerConfig(max_iterations=args.maxiter, seed=args.seed)
    if args.mode == "constant":
        result = mle_constant(trajectory, lo, hi, config)
    elif args.mode == "truncated":
        result = mle_truncated(
            trajectory,
            RateBounds(lower=lo, upper=hi),
            args.alpha,
            args.epsilon,
            args.truncate,
            config,
        )
    else:
        raise DomainError(f"unknown mode {args.mode!r}")
    _dump_json(
        {
            "mode": args.mode,
            "eta0_hat": result.eta0_hat,
            "eta_n_hat": result.eta_n_hat,
            "objective": result.objective,
            "iterations_used": result.iterations_used,
            "hit_neg_infinity": result.hit_neg_infinity,
            "hit_boundary": result.hit_boundary,
            "upsilon_used": result.upsilon_used,
        },
        args.out,
    )
    return 0


def _cmd_likelihood(args) -> int:
    trajectory = _load_trajectory(args.trajectory)
    lo, hi = _parse_theta(args.theta)
    pi1 = trajectory.spec.max_loss
    if args.truncate == "none":
        value = full_log_likelihood(trajectory, args.delta0)
        upsilon = trajectory.n
    else:
        if args.truncate == "theory":
            upsilon = truncation_horizon(
                trajectory.spec.k, args.epsilon, args.alpha, hi, trajectory.n
            )
        else:
            tc = TruncationConfig(
                epsilon=args.epsilon, alpha=args.alpha, bounds=RateBounds(lower=lo, upper=hi)
            )
            upsilon = empirical_truncation_horizon(trajectory, tc)
        value = truncated_log_likelihood(trajectory, args.delta0, args.alpha, pi1, upsilon)
    _dump_json(
        {
            "value": None if value.value == -math.inf else value.value,
            "neg_infinity": value.value == -math.inf,
            "evaluated_steps": value.evaluated_steps,
            "upsilon_used": upsilon,
        },
        args.out,
    )
    return 0


def _cmd_kl(args) -> int:
    lines = ["n,eta,delta,kl_exact,kl_mc,stderr"]
    for n in _parse_ints(args.n):
        exact = kl_exact(args.eta, args.delta, args.pi1, n)
        mc = kl_monte_carlo(args.eta, args.delta, args.pi1, n, args.reps, args.seed)
        lines.append(
            f"{n},{args.eta!r},{args.delta!r},{exact.value!r},{mc.value!r},{mc.stderr!r}"
        )
    _write_text("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_bounds(args) -> int:
    if not args.tetration:
        raise DomainError("choose a bound family: --tetration")
    rows = tetration_margins(args.eta, args.pi1, args.kmax)
    lines = ["i,q_i,bound,margin"]
    for row in rows:
        lines.append(f"{row.index},{row.q_value!r},{row.bound!r},{row.margin!r}")
    _write_text("\n".join(lines) + "\n", args.out)
    return 0


def _resolve_config_path(raw: str) -> str:
    path = Path(raw)
    if path.exists():
        return str(path)
    packaged = resources.files("exp3mle").joinpath("presets", path.name)
    if packaged.is_file():
        return str(packaged)
    raise FileNotFoundError(f"config not found: {raw}")


def _experiment_config_from_dict(data: dict) -> ExperimentConfig:
    optimizer = OptimizerConfig(**data.get("optimizer", {}))
    theta = data["theta"]
    return ExperimentConfig(
        name=data["name"],
        mode=data["mode"],
        spec=BanditSpec(losses=tuple(data["losses"])),
        theta=RateBounds(lower=theta[0], upper=theta[1]),
        n_values=tuple(data["n_values"]),
        replications=data.get("replications", 100),
        base_seed=data.get("base_seed", 0),
        eta=data.get("eta"),
        eta0=data.get("eta0"),
        alpha=data.get("alpha", 0.5),
        epsilon=data.get("epsilon", 1e-7),
        epsilons=tuple(data.get("epsilons", ())),
        truncation=data.get("truncation", "empirical"),
        grid_points=data.get("grid_points", 50),
        optimizer=optimizer,
    )


def _report_svgs(report: ExperimentReport) -> dict:
    out = {}
    aggregates = report.aggregates
    for metric, per_n in aggregates.get("per_n_quantiles", {}).items():
        points = [
            (r.n, getattr(r, metric))
            for r in report.records
            if getattr(r, metric) is not None
        ]
        markers = [(int(k), v) for k, v in per_n.items() if v is not None]
        curve = []
        fit = aggregates.get("regression", {}).get(metric)
        if fit and "coefficient" in fit:
            xs = sorted({r.n for r in report.records})
            curve = [(x, fit["coefficient"] * x ** fit["exponent"]) for x in xs]
        out[metric] = render_scatter(
            points, markers, curve, title=f"{report.config.name}: {metric}", y_label=metric
        )
    for key, per_n in aggregates.get("upsilon_means", {}).items():
        markers = [(int(k), v) for k, v in per_n.items() if v is not None]
        fit = aggregates.get("regression", {}).get(key)
        curve = []
        if fit and "coefficient" in fit:
            curve = [(x, fit["coefficient"] * math.sqrt(x)) for x, _ in markers]
        out[f"upsilon_{key}"] = render_scatter(
            [], markers, curve, title=f"{report.config.name}: mean horizon, eps={key}",
            y_label="upsilon_max",
        )
    return out


def _run_one_experiment(data: dict, args) -> None:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if data.get("mode") == "likelihood_curve":
        theta = data["theta"]
        curve = likelihood_curve(
            spec=BanditSpec(losses=tuple(data["losses"])),
            eta=data["eta"],
            n=data["n"],
            seed=args.seed if args.seed is not None else data.get("seed", 0),
            lower=theta[0],
            upper=theta[1],
            points=data.get("points", 141),
        )
        name = data["name"]
        lines = ["delta,log_likelihood,evaluated_steps"]
        for delta, value, steps in curve["rows"]:
            lines.append(f"{delta!r},{'-inf' if value == -math.inf else repr(value)},{steps}")
        (out_dir / f"{name}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        summary = {k: v for k, v in curve.items() if k != "rows"}
        _dump_json(summary, str(out_dir / f"{name}.json"))
        if args.svg:
            points = [(d, v) for d, v, _ in curve["rows"] if v != -math.inf]
            svg = render_scatter(points, [(curve["eta_hat"], curve["objective"])], [],
                                 title=name, x_label="delta", y_label="log-likelihood")
            (out_dir / f"{name}.svg").write_text(svg, encoding="utf-8")
        return

    config = _experiment_config_from_dict(data)
    if args.seed is not None:
        config = ExperimentConfig(**{**_config_kwargs(config), "base_seed": args.seed})
    report = run_experiment(config, jobs=args.jobs)
    (out_dir / f"{config.name}.csv").write_text(report.to_csv(), encoding="utf-8")
    _dump_json(report.aggregates, str(out_dir / f"{config.name}_aggregates.json"))
    if args.svg:
        for metric, svg_text in _report_svgs(report).items():
            (out_dir / f"{config.name}_{metric}.svg").write_text(svg_text, encoding="utf-8")


def _config_kwargs(config: ExperimentConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in config.__dataclass_fields__.values()}


def _cmd_experiment(args) -> int:
    path = _resolve_config_path(args.config)
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    panels = data["panels"] if "panels" in data else [data]
    for panel in panels:
        _run_one_experiment(panel, args)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exp3mle",
        description="Simulate exponential-weights learners and estimate their learning rate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the learner and write a trajectory JSON")
    p.add_argument("--k", type=int, default=None, help="arm count (validated against --losses)")
    p.add_argument("--losses", required=True, help="comma-separated losses, sorted descending")
    p.add_argument("--eta", type=float, default=None, help="constant learning rate")
    p.add_argument("--eta0", type=float, default=None, help="base rate of the decreasing schedule")
    p.add_argument("--alpha", type=float, default=0.5, help="decreasing-schedule exponent")
    p.add_argument("--n", type=int, required=True, help="horizon")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None, help="output JSON path (stdout if omitted)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="maximum-likelihood rate estimate for a trajectory")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--mode", choices=("constant", "truncated"), required=True)
    p.add_argument("--theta", default="0.1,0.8", help="search box lower,upper")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, default=1e-7)
    p.add_argument("--truncate", choices=("theory", "empirical"), default="empirical")
    p.add_argument("--maxiter", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("likelihood", help="evaluate a log-likelihood along a trajectory")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--delta0", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, default=1e-7)
    p.add_argument("--truncate", choices=("theory", "empirical", "none"), required=True)
    p.add_argument("--theta", default="0.1,0.8")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_likelihood)

    p = sub.add_parser("kl", help="exact and Monte Carlo divergence between two rates")
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--pi1", type=float, required=True)
    p.add_argument("--n", required=True, help="comma-separated horizons")
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_kl)

    p = sub.add_parser("bounds", help="per-index margins of the collapse bounds")
    p.add_argument("--tetration", action="store_true", help="check the tetration bound")
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--pi1", type=float, required=True)
    p.add_argument("--kmax", type=int, default=5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("experiment", help="run a replication sweep from a JSON config")
    p.add_argument("--config", required=True, help="config path or shipped preset name")
    p.add_argument("--out-dir", default=".", help="directory for CSV/JSON outputs")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="override the config base seed")
    p.add_argument("--svg", action="store_true", help="also emit scatter SVGs")
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exp3MLEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
