"""Command-line front end.

Subcommands:
  run <config.ini>    run every experiment section of a config file
  account             print the zCDP/epsilon ledger for given parameters
  bounds              evaluate the convergence bound calculators
  inspect <dataset>   parse + partition a dataset and print a summary

Exit codes: 0 success, 2 configuration/parameter error, 3 diverged run.
"""

from __future__ import annotations

import argparse
import sys

from . import accounting
from .bounds import BoundInputs, bound_convex, bound_nonconvex, lr_condition
from .config import parse_config_file
from .data import DatasetSpec
from .errors import DivergedRunError, ParseError
from .experiments import load_dataset, run_experiment

CONFIG_ERROR = 2
DIVERGED = 3


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except DivergedRunError as err:
        print(f"error: {err}", file=sys.stderr)
        return DIVERGED
    except (ValueError, ParseError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return CONFIG_ERROR


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privfed")
    sub = parser.add_subparsers(required=True)

    p_run = sub.add_parser("run", help="run experiments from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--section", help="run only this config section")
    p_run.set_defaults(handler=_cmd_run)

    p_acc = sub.add_parser("account", help="privacy ledger for given parameters")
    p_acc.add_argument("--config", help="take parameters from an experiment config")
    p_acc.add_argument("--section", help="config section (defaults to the first)")
    p_acc.add_argument("--clip-norm", type=float, default=1.0)
    p_acc.add_argument("--batch-size", type=int)
    p_acc.add_argument("--dataset-size", type=int)
    p_acc.add_argument("--local-period", type=int)
    p_acc.add_argument("--devices-per-round", type=int, default=10)
    p_acc.add_argument("--total-devices", type=int, default=16)
    p_acc.add_argument("--noise-std", type=float)
    p_acc.add_argument("--delta", type=float, default=1e-4)
    p_acc.add_argument("--stepsize", type=float, default=1.0)
    group = p_acc.add_mutually_exclusive_group()
    group.add_argument("--rounds", type=int, help="report expected counts T*r/n")
    group.add_argument("--participation", help="comma-separated realized counts")
    p_acc.set_defaults(handler=_cmd_account)

    p_bounds = sub.add_parser("bounds", help="convergence bound calculators")
    p_bounds.add_argument("--l-smooth", type=float)
    p_bounds.add_argument("--grad-var", type=float)
    p_bounds.add_argument("--dim", type=int)
    p_bounds.add_argument("--estimate-from",
                          help="dataset to estimate L, beta^2 and d from")
    p_bounds.add_argument("--model", default="logistic",
                          choices=["logistic", "mlp"])
    p_bounds.add_argument("--estimate-pairs", type=int, default=200)
    p_bounds.add_argument("--f0-gap", type=float, required=True)
    p_bounds.add_argument("--stepsize", type=float, required=True)
    p_bounds.add_argument("--total-iters", type=int, required=True)
    p_bounds.add_argument("--local-period", type=int, required=True)
    p_bounds.add_argument("--batch-size", type=int, required=True)
    p_bounds.add_argument("--noise-var", type=float, required=True)
    p_bounds.add_argument("--devices-per-round", type=int, default=10)
    p_bounds.add_argument("--total-devices", type=int, default=16)
    p_bounds.add_argument("--strong-convexity", type=float)
    p_bounds.set_defaults(handler=_cmd_bounds)

    p_inspect = sub.add_parser("inspect", help="summarize a dataset")
    p_inspect.add_argument("dataset", help="Adult CSV path or synthetic:<dim>:<sep>")
    p_inspect.add_argument("--n-devices", type=int, default=16)
    p_inspect.add_argument("--per-device", type=int, default=3052)
    p_inspect.add_argument("--seed", type=int, default=0)
    p_inspect.set_defaults(handler=_cmd_inspect)

    return parser


def _cmd_run(args) -> int:
    experiments = parse_config_file(args.config)
    if args.section is not None:
        experiments = [e for e in experiments if e.name == args.section]
        if not experiments:
            raise ValueError(f"no section named {args.section!r}")
    exit_code = 0
    for experiment in experiments:
        result = run_experiment(experiment)
        diverged = [row for row in result.run_rows if row[5] != ""]
        print(f"[{experiment.name}] wrote {result.output_dir}/"
              f"{{rounds,summary,runs}}.csv ({len(result.round_rows)} round rows)")
        for row in diverged:
            print(f"[{experiment.name}] sweep={row[0]} seed={row[1]} "
                  f"diverged at round {row[5]}")
            exit_code = DIVERGED
    return exit_code


def _params_from_config(args):
    """Resolve PrivacyParams and rounds from an experiment config section,
    using the first sweep point (noise calibrated when the sweep is epsilon)."""
    from .orchestrator import FederatedRun

    experiments = parse_config_file(args.config)
    if args.section is not None:
        experiments = [e for e in experiments if e.name == args.section]
        if not experiments:
            raise ValueError(f"no section named {args.section!r}")
    experiment = experiments[0]
    train = experiment.point_config(experiment.sweep_values[0], 0)
    run = FederatedRun(train, load_dataset(experiment.dataset))
    if run.privacy_params is None:
        raise ValueError(f"mode {train.mode!r} has no round-level accounting table")
    print(f"[{experiment.name}] sweep point {experiment.sweep_values[0]}, "
          f"sigma={run.sigma:.6g}, gamma={run.batch_size}, m={run.m_eff}")
    return run.privacy_params.with_noise(run.sigma), train.rounds


def _cmd_account(args) -> int:
    if args.config is not None:
        params, rounds = _params_from_config(args)
    else:
        required = {"batch_size": args.batch_size, "dataset_size": args.dataset_size,
                    "local_period": args.local_period, "noise_std": args.noise_std}
        missing = [k for k, v in required.items() if v is None]
        if missing:
            raise ValueError(f"missing flags (or use --config): {missing}")
        params = accounting.PrivacyParams(
            clip_norm=args.clip_norm,
            batch_size=args.batch_size,
            local_dataset_size=args.dataset_size,
            local_period=args.local_period,
            devices_per_round=args.devices_per_round,
            total_devices=args.total_devices,
            noise_std=args.noise_std,
            failure_prob=args.delta,
            stepsize=args.stepsize,
        )
        rounds = args.rounds
    if args.participation is not None:
        counts = [float(c) for c in args.participation.split(",")]
        if len(counts) != params.total_devices:
            raise ValueError(
                f"got {len(counts)} participation counts for "
                f"{params.total_devices} devices"
            )
    else:
        if rounds is None:
            raise ValueError("give --rounds or --participation")
        counts = [accounting.expected_participation(
            rounds, params.devices_per_round, params.total_devices
        )] * params.total_devices
    rho_iter, rho_local, rho_round = accounting.round_rho_breakdown(params)
    delta = params.failure_prob
    print(f"rho_iter={rho_iter.rho:.6g}  rho_local={rho_local.rho:.6g}  "
          f"rho_round={rho_round.rho:.6g}  delta={delta:g}")
    print(f"{'device':>6}  {'C_i':>8}  {'rho_total':>12}  {'epsilon':>12}")
    for device, count in enumerate(counts):
        rho_total = count * rho_round.rho
        eps = accounting.zcdp_to_dp(accounting.ZcdpBudget(rho_total), delta).epsilon
        print(f"{device:>6}  {count:>8g}  {rho_total:>12.6g}  {eps:>12.6g}")
    return 0


def _cmd_bounds(args) -> int:
    l_smooth, grad_var, dim = args.l_smooth, args.grad_var, args.dim
    if args.estimate_from is not None:
        from .bounds import estimate_bound_inputs
        from .orchestrator import TrainConfig

        dataset = load_dataset(DatasetSpec(source=args.estimate_from))
        shape = TrainConfig(
            mode="fedavg", rounds=1, local_period=1, devices_per_round=1,
            stepsize=1.0, model=args.model,
        ).model_shape(dataset.feature_dim)
        estimates = estimate_bound_inputs(dataset, shape, n_pairs=args.estimate_pairs)
        l_smooth = l_smooth if l_smooth is not None else estimates["l_smooth"]
        grad_var = grad_var if grad_var is not None else estimates["grad_var"]
        dim = dim if dim is not None else estimates["dim"]
        print(f"estimated from {args.estimate_from}: L={estimates['l_smooth']:.6g} "
              f"beta^2={estimates['grad_var']:.6g} d={estimates['dim']}")
    missing = [name for name, v in
               (("--l-smooth", l_smooth), ("--grad-var", grad_var), ("--dim", dim))
               if v is None]
    if missing:
        raise ValueError(f"missing {missing} (give flags or --estimate-from)")
    inputs = BoundInputs(
        l_smooth=l_smooth,
        grad_var=grad_var,
        f0_gap=args.f0_gap,
        stepsize=args.stepsize,
        total_iters=args.total_iters,
        local_period=args.local_period,
        batch_size=args.batch_size,
        noise_var=args.noise_var,
        dim=dim,
        devices_per_round=args.devices_per_round,
        total_devices=args.total_devices,
        strong_convexity=args.strong_convexity,
    )
    ok, slack = lr_condition(args.stepsize, l_smooth, args.local_period)
    print(f"stepsize condition 5*eta*L + 3*tau^2*eta^2*L^2 <= 1: "
          f"{'satisfied' if ok else 'VIOLATED'} (slack {slack:.6g})")
    print(f"nonconvex gradient-norm bound: {bound_nonconvex(inputs):.6g}")
    if args.strong_convexity is not None:
        print(f"convex optimality-gap bound: {bound_convex(inputs):.6g}")
    return 0


def _cmd_inspect(args) -> int:
    spec = DatasetSpec(
        source=args.dataset,
        n_devices=args.n_devices,
        per_device=args.per_device,
        seed=args.seed,
    )
    dataset = load_dataset(spec)
    print(f"devices: {dataset.n_devices}")
    print(f"feature_dim: {dataset.feature_dim}")
    sizes = [
        (len(d.y_train), len(d.y_test), len(d.y_val)) for d in dataset.devices
    ]
    print(f"per-device train/test/val sizes: {sorted(set(sizes))}")
    _, y_train = dataset.pooled("train")
    print(f"pooled train rows: {len(y_train)}, positive rate: {y_train.mean():.4f}")
    if dataset.encoder is not None:
        enc = dataset.encoder
        print("numeric columns: " + ", ".join(
            f"{c} (mean {enc.means[c]:.4g}, std {enc.stds[c]:.4g})"
            for c in enc.means
        ))
        print("categorical vocabulary sizes: " + ", ".join(
            f"{c}={len(v)}" for c, v in enc.vocabularies.items()
        ))
    return 0


if __name__ == "__main__":
    sys.exit(main())
