"""Sweep-style experiment runner with deterministic CSV output.

An experiment is one sweep axis (noise level sigma, local period tau, or
privacy budget epsilon) crossed with a number of repetition seeds. Every
(sweep value, seed) job is an independent seeded training run; jobs may run
in parallel, results are sorted before writing so output bytes depend only on
(config, dataset).

Files written to the output directory:

  rounds.csv   one row per (sweep_value, seed, round)
  summary.csv  per (sweep_value, round): seed-averaged metrics, live seed
               count, and how many seeds had diverged by that round
  runs.csv     one row per (sweep_value, seed): calibrated sigma, final
               metrics, divergence round if any

Floats are serialized with repr (shortest round-trip), so equal runs produce
byte-identical files on one platform.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .data import DatasetSpec, EncodedDataset, load_adult, partition, synthetic
from .errors import DivergedRunError
from .orchestrator import FederatedRun, TrainConfig

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "SWEEP_AXES",
    "load_dataset",
    "run_experiment",
]

SWEEP_AXES = ("sigma", "tau", "epsilon")

ROUNDS_HEADER = (
    "sweep_value", "seed", "round", "train_loss", "grad_norm_sq",
    "test_accuracy", "epsilon_realized",
)
SUMMARY_HEADER = (
    "sweep_value", "round", "train_loss", "grad_norm_sq", "test_accuracy",
    "epsilon_realized", "n_seeds", "diverged_seeds",
)
RUNS_HEADER = (
    "sweep_value", "seed", "sigma", "final_test_accuracy", "final_epsilon_max",
    "diverged_at",
)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dataset: DatasetSpec
    train: TrainConfig
    sweep_axis: str
    sweep_values: tuple
    output_dir: str
    repetitions: int = 5
    workers: int = 1

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {SWEEP_AXES}")
        if not self.sweep_values:
            raise ValueError("sweep_values must be nonempty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.sweep_axis == "tau" and any(
            int(v) != v or v < 1 for v in self.sweep_values
        ):
            raise ValueError("tau sweep values must be positive integers")

    def point_config(self, value, rep: int) -> TrainConfig:
        base = replace(self.train, seed=self.train.seed + rep)
        if self.sweep_axis == "sigma":
            return replace(base, noise_std=float(value), target_epsilon=None)
        if self.sweep_axis == "epsilon":
            return replace(base, noise_std=None, target_epsilon=float(value))
        return replace(base, local_period=int(value), batch_size=None)


@dataclass
class ExperimentResult:
    round_rows: list[tuple]
    summary_rows: list[tuple]
    run_rows: list[tuple]
    output_dir: Path


def load_dataset(spec: DatasetSpec) -> EncodedDataset:
    """Materialize a DatasetSpec: an Adult CSV path or synthetic:<dim>:<sep>."""
    if spec.source.startswith("synthetic"):
        parts = spec.source.split(":")
        dim = int(parts[1]) if len(parts) > 1 else 20
        sep = float(parts[2]) if len(parts) > 2 else 2.0
        return synthetic(
            spec.n_devices, spec.per_device, dim, sep,
            seed=spec.seed, train_frac=spec.train_frac, test_frac=spec.test_frac,
        )
    table = load_adult(spec.source)
    return partition(table, spec)


def _run_point(args) -> tuple:
    config, dataset, value, rep = args
    train_config = config.point_config(value, rep)
    seed = train_config.seed
    run = FederatedRun(train_config, dataset)
    diverged_at = ""
    try:
        result = run.run()
        records = result.records
    except DivergedRunError as err:
        records = err.records
        diverged_at = err.round_index

    rows = []
    for record in records:
        eps = max(run.device_epsilon(c) for c in record.participation)
        rows.append((
            value, seed, record.round_index, record.train_loss,
            record.grad_norm_sq, record.test_accuracy, eps,
        ))
    final_acc = records[-1].test_accuracy if records else ""
    final_eps = rows[-1][6] if rows else ""
    run_row = (value, seed, run.sigma, final_acc, final_eps, diverged_at)
    return value, seed, rows, run_row, diverged_at


def run_experiment(
    config: ExperimentConfig, dataset: EncodedDataset | None = None
) -> ExperimentResult:
    """Run the sweep x repetitions grid and write the three CSV tables."""
    if dataset is None:
        dataset = load_dataset(config.dataset)

    jobs = [
        (config, dataset, value, rep)
        for value in config.sweep_values
        for rep in range(config.repetitions)
    ]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_point, jobs))
    else:
        outcomes = [_run_point(job) for job in jobs]

    outcomes.sort(key=lambda o: (float(o[0]), o[1]))
    round_rows = [row for outcome in outcomes for row in outcome[2]]
    run_rows = [outcome[3] for outcome in outcomes]

    summary_rows = []
    for value in sorted(set(config.sweep_values), key=float):
        per_seed = [o for o in outcomes if o[0] == value]
        divergence_rounds = [
            o[4] for o in per_seed if o[4] != ""
        ]
        max_round = max((len(o[2]) for o in per_seed), default=0)
        for t in range(max_round):
            live = [o[2][t] for o in per_seed if len(o[2]) > t]
            n_seeds = len(live)
            diverged = sum(1 for dr in divergence_rounds if dr <= t)
            summary_rows.append((
                value, t,
                sum(row[3] for row in live) / n_seeds,
                sum(row[4] for row in live) / n_seeds,
                sum(row[5] for row in live) / n_seeds,
                sum(row[6] for row in live) / n_seeds,
                n_seeds, diverged,
            ))

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "rounds.csv", ROUNDS_HEADER, round_rows)
    _write_csv(out / "summary.csv", SUMMARY_HEADER, summary_rows)
    _write_csv(out / "runs.csv", RUNS_HEADER, run_rows)
    return ExperimentResult(round_rows, summary_rows, run_rows, out)


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
