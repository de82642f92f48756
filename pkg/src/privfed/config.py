"""Declarative experiment config files (INI key = value, one section per
experiment).

Every hyperparameter has a named key; unset keys fall back to the standard
setup: 16 devices, 10 selected per round, delta 1e-4, 5 repetitions, and
per-model round/period defaults (logistic: 20 rounds of period 10; mlp: 50
rounds of period 5).

Example::

    [tradeoff_logistic]
    dataset = data/adult.csv
    model = logistic
    mode = private_secure
    rounds = 20
    local_period = 2
    sweep = epsilon
    values = 1 2 4 8 10
    output = results/tradeoff_logistic
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .data import DatasetSpec
from .experiments import ExperimentConfig
from .orchestrator import TrainConfig

__all__ = ["MODEL_DEFAULTS", "parse_config_file", "build_experiment"]

# stepsizes picked on the validation split of the reference setup
MODEL_DEFAULTS = {
    "logistic": {"rounds": 20, "local_period": 10, "stepsize": 2.0},
    "mlp": {"rounds": 50, "local_period": 5, "stepsize": 0.5},
}
COMMON_DEFAULTS = {
    "mode": "private_secure",
    "devices_per_round": 10,
    "n_devices": 16,
    "per_device": 3052,
    "delta": 1e-4,
    "repetitions": 5,
    "clip_norm": 1.0,
    "seed": 1,
    "workers": 1,
    "dataset_seed": 0,
}

_KNOWN_KEYS = {
    "dataset", "model", "mode", "rounds", "local_period", "devices_per_round",
    "n_devices", "per_device", "delta", "repetitions", "clip_norm", "seed",
    "stepsize", "batch_size", "noise_std", "target_epsilon", "sweep", "values",
    "output", "workers", "dataset_seed", "hidden_width",
}


def parse_config_file(path) -> list[ExperimentConfig]:
    """All experiment sections of a config file, in file order."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ValueError(f"config file not found: {path}")
    experiments = []
    for section in parser.sections():
        experiments.append(build_experiment(section, dict(parser[section])))
    if not experiments:
        raise ValueError(f"config file {path} defines no experiment sections")
    return experiments


def build_experiment(name: str, raw: dict[str, str]) -> ExperimentConfig:
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ValueError(f"[{name}] unknown keys: {sorted(unknown)}")
    missing = {"dataset", "model", "sweep", "values", "output"} - set(raw)
    if missing:
        raise ValueError(f"[{name}] missing required keys: {sorted(missing)}")

    model = raw["model"]
    if model not in MODEL_DEFAULTS:
        raise ValueError(f"[{name}] model must be one of {sorted(MODEL_DEFAULTS)}")
    defaults = {**COMMON_DEFAULTS, **MODEL_DEFAULTS[model]}

    def get(key, cast, fallback=None):
        if key in raw:
            try:
                return cast(raw[key])
            except ValueError:
                raise ValueError(f"[{name}] bad value for {key}: {raw[key]!r}") from None
        return defaults.get(key, fallback)

    sweep_axis = raw["sweep"]
    try:
        if sweep_axis == "tau":
            values = tuple(int(v) for v in raw["values"].split())
        else:
            values = tuple(float(v) for v in raw["values"].split())
    except ValueError:
        raise ValueError(f"[{name}] bad sweep values: {raw['values']!r}") from None
    if not values:
        raise ValueError(f"[{name}] empty sweep values")

    noise_std = get("noise_std", float)
    target_epsilon = get("target_epsilon", float)
    local_period = get("local_period", int)
    # seed the base config with the first sweep point so it validates
    if sweep_axis == "sigma":
        noise_std, target_epsilon = float(values[0]), None
    elif sweep_axis == "epsilon":
        noise_std, target_epsilon = None, float(values[0])
    else:
        local_period = int(values[0])

    train = TrainConfig(
        mode=get("mode", str),
        rounds=get("rounds", int),
        local_period=local_period,
        devices_per_round=get("devices_per_round", int),
        stepsize=get("stepsize", float),
        model=model,
        hidden_width=get("hidden_width", int, 64),
        batch_size=get("batch_size", int),
        clip_norm=get("clip_norm", float),
        noise_std=noise_std,
        target_epsilon=target_epsilon,
        failure_prob=get("delta", float),
        seed=get("seed", int),
    )
    dataset = DatasetSpec(
        source=raw["dataset"],
        n_devices=get("n_devices", int),
        per_device=get("per_device", int),
        seed=get("dataset_seed", int),
    )
    return ExperimentConfig(
        name=name,
        dataset=dataset,
        train=train,
        sweep_axis=sweep_axis,
        sweep_values=values,
        output_dir=str(Path(raw["output"])),
        repetitions=get("repetitions", int),
        workers=get("workers", int),
    )
