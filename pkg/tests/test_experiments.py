import pytest

from privfed import config as config_mod
from privfed import experiments
from privfed.cli import main
from privfed.data import DatasetSpec, synthetic
from privfed.experiments import ExperimentConfig, run_experiment
from privfed.orchestrator import TrainConfig


@pytest.fixture(scope="module")
def tiny_dataset():
    return synthetic(4, 40, 4, separability=3.0, seed=2)


def tiny_experiment(tmp_path, **overrides):
    train = TrainConfig(mode="private_plain", rounds=3, local_period=2,
                        devices_per_round=2, stepsize=0.3, noise_std=0.05, seed=10)
    defaults = dict(
        name="tiny",
        dataset=DatasetSpec(source="synthetic:4:3.0", n_devices=4, per_device=40),
        train=train,
        sweep_axis="sigma",
        sweep_values=(0.01, 0.1),
        output_dir=str(tmp_path / "out"),
        repetitions=2,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestRunExperiment:
    def test_tables_and_shapes(self, tmp_path, tiny_dataset):
        result = run_experiment(tiny_experiment(tmp_path), tiny_dataset)
        # 2 sweep values x 2 seeds x 3 rounds
        assert len(result.round_rows) == 12
        assert len(result.summary_rows) == 6
        assert len(result.run_rows) == 4
        assert (result.output_dir / "rounds.csv").exists()
        header = (result.output_dir / "rounds.csv").read_text().splitlines()[0]
        assert header == ",".join(experiments.ROUNDS_HEADER)

    def test_summary_is_seed_average(self, tmp_path, tiny_dataset):
        result = run_experiment(tiny_experiment(tmp_path), tiny_dataset)
        for srow in result.summary_rows:
            value, t = srow[0], srow[1]
            per_seed = [
                row for row in result.round_rows if row[0] == value and row[2] == t
            ]
            assert srow[2] == pytest.approx(
                sum(r[3] for r in per_seed) / len(per_seed), rel=1e-15
            )
            assert srow[4] == pytest.approx(
                sum(r[5] for r in per_seed) / len(per_seed), rel=1e-15
            )
            assert srow[6] == len(per_seed)

    def test_zero_rounds_summary_exists_rounds_empty(self, tmp_path, tiny_dataset):
        cfg = tiny_experiment(tmp_path, train=TrainConfig(
            mode="private_plain", rounds=0, local_period=2, devices_per_round=2,
            stepsize=0.3, noise_std=0.05, seed=10), repetitions=1)
        result = run_experiment(cfg, tiny_dataset)
        assert result.round_rows == []
        assert result.summary_rows == []
        assert (result.output_dir / "summary.csv").read_text().count("\n") == 1

    def test_byte_identical_reruns(self, tmp_path, tiny_dataset):
        a = run_experiment(tiny_experiment(tmp_path / "a"), tiny_dataset)
        b = run_experiment(tiny_experiment(tmp_path / "b"), tiny_dataset)
        for name in ("rounds.csv", "summary.csv", "runs.csv"):
            assert (a.output_dir / name).read_bytes() == (b.output_dir / name).read_bytes()

    def test_parallel_matches_serial(self, tmp_path, tiny_dataset):
        serial = run_experiment(tiny_experiment(tmp_path / "s"), tiny_dataset)
        parallel = run_experiment(
            tiny_experiment(tmp_path / "p", workers=2), tiny_dataset
        )
        for name in ("rounds.csv", "summary.csv", "runs.csv"):
            assert (serial.output_dir / name).read_bytes() == (
                parallel.output_dir / name
            ).read_bytes()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_recorded_in_summary(self, tmp_path, tiny_dataset):
        cfg = tiny_experiment(
            tmp_path,
            train=TrainConfig(mode="private_plain", rounds=4, local_period=2,
                              devices_per_round=2, stepsize=1e308, noise_std=1.0,
                              seed=10),
            sweep_axis="sigma", sweep_values=(1.0,), repetitions=1,
        )
        result = run_experiment(cfg, tiny_dataset)
        assert result.run_rows[0][5] != ""  # diverged_at is populated
        assert all(row[7] >= 0 for row in result.summary_rows)

    def test_epsilon_sweep_calibrates_per_point(self, tmp_path, tiny_dataset):
        cfg = tiny_experiment(
            tmp_path, sweep_axis="epsilon", sweep_values=(2.0, 8.0), repetitions=1,
            train=TrainConfig(mode="private_secure", rounds=3, local_period=2,
                              devices_per_round=2, stepsize=0.3,
                              target_epsilon=2.0, seed=10),
        )
        result = run_experiment(cfg, tiny_dataset)
        sigmas = {row[0]: row[2] for row in result.run_rows}
        assert sigmas[2.0] > sigmas[8.0]

    def test_validation(self, tmp_path):
        with pytest.raises(ValueError):
            tiny_experiment(tmp_path, sweep_axis="nonsense")
        with pytest.raises(ValueError):
            tiny_experiment(tmp_path, repetitions=0)
        with pytest.raises(ValueError):
            tiny_experiment(tmp_path, sweep_values=())
        with pytest.raises(ValueError):
            tiny_experiment(tmp_path, sweep_axis="tau", sweep_values=(1.5,))


CONFIG_TEXT = """
[sweep_eps]
dataset = synthetic:4:3.0
model = logistic
mode = private_secure
rounds = 3
local_period = 2
devices_per_round = 2
n_devices = 4
per_device = 40
sweep = epsilon
values = 2 8
repetitions = 2
seed = 4
output = {out}
"""


class TestConfigFile:
    def test_parse_and_defaults(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(CONFIG_TEXT.format(out=tmp_path / "results"))
        experiments_list = config_mod.parse_config_file(path)
        assert len(experiments_list) == 1
        exp = experiments_list[0]
        assert exp.name == "sweep_eps"
        assert exp.train.failure_prob == 1e-4
        assert exp.train.clip_norm == 1.0
        assert exp.sweep_values == (2.0, 8.0)
        assert exp.repetitions == 2

    def test_model_defaults_fill_rounds(self, tmp_path):
        raw = dict(dataset="synthetic", model="mlp", sweep="sigma",
                   values="0.1", output="o")
        exp = config_mod.build_experiment("x", raw)
        assert exp.train.rounds == 50
        assert exp.train.local_period == 5
        raw["model"] = "logistic"
        exp = config_mod.build_experiment("x", raw)
        assert exp.train.rounds == 20
        assert exp.train.local_period == 10

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown keys"):
            config_mod.build_experiment("x", {"dataset": "d", "model": "logistic",
                                              "sweep": "sigma", "values": "1",
                                              "output": "o", "bogus": "1"})

    def test_missing_keys_rejected(self):
        with pytest.raises(ValueError, match="missing required"):
            config_mod.build_experiment("x", {"model": "logistic"})

    def test_bad_values_rejected(self):
        base = {"dataset": "d", "model": "logistic", "sweep": "sigma",
                "values": "abc", "output": "o"}
        with pytest.raises(ValueError, match="bad sweep values"):
            config_mod.build_experiment("x", base)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValueError, match="not found"):
            config_mod.parse_config_file(tmp_path / "nope.ini")

    def test_shipped_experiment_config_parses(self):
        from pathlib import Path

        path = Path(__file__).resolve().parents[1] / "configs" / "paper_experiments.ini"
        exps = config_mod.parse_config_file(path)
        assert len(exps) == 12
        axes = {e.sweep_axis for e in exps}
        assert axes == {"sigma", "tau", "epsilon"}

    def test_tau_sweep_points_reset_batching(self, tmp_path):
        exp = tiny_experiment(
            tmp_path, sweep_axis="tau", sweep_values=(1, 2),
            train=TrainConfig(mode="private_plain", rounds=2, local_period=1,
                              devices_per_round=2, stepsize=0.3, noise_std=0.05,
                              seed=10, batch_size=16),
        )
        point = exp.point_config(2, 0)
        assert point.local_period == 2
        assert point.batch_size is None  # auto gamma per tau


class TestCli:
    def test_run_subcommand(self, tmp_path, capsys):
        path = tmp_path / "exp.ini"
        path.write_text(CONFIG_TEXT.format(out=tmp_path / "results"))
        assert main(["run", str(path)]) == 0
        out = capsys.readouterr().out
        assert "sweep_eps" in out
        assert (tmp_path / "results" / "summary.csv").exists()

    def test_run_unknown_section(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(CONFIG_TEXT.format(out=tmp_path / "results"))
        assert main(["run", str(path), "--section", "nope"]) == 2

    def test_config_error_exit_code(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[x]\nmodel = logistic\n")
        assert main(["run", str(path)]) == 2

    def test_account_subcommand(self, capsys):
        code = main([
            "account", "--batch-size", "244", "--dataset-size", "2440",
            "--local-period", "10", "--noise-std", "0.01", "--rounds", "20",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "rho_iter" in out and "epsilon" in out
        assert out.count("\n") >= 18  # one line per device

    def test_account_rejects_bad_structure(self, capsys):
        code = main([
            "account", "--batch-size", "40", "--dataset-size", "2440",
            "--local-period", "10", "--noise-std", "0.01", "--rounds", "20",
        ])
        assert code == 2  # 10 not divisible by 2440/40

    def test_account_from_config_round_trips_target(self, tmp_path, capsys):
        path = tmp_path / "exp.ini"
        path.write_text(CONFIG_TEXT.format(out=tmp_path / "results"))
        assert main(["account", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        # calibrated sigma must reproduce the first sweep epsilon (2.0)
        device_rows = [l for l in out.splitlines() if l.strip().startswith("0 ")]
        assert device_rows and float(device_rows[0].split()[-1]) == pytest.approx(2.0)

    def test_account_missing_flags(self):
        assert main(["account", "--rounds", "5"]) == 2

    def test_bounds_estimate_from_dataset(self, capsys):
        code = main([
            "bounds", "--estimate-from", "synthetic:6:2.0", "--estimate-pairs", "40",
            "--f0-gap", "1", "--stepsize", "0.05", "--total-iters", "100",
            "--local-period", "2", "--batch-size", "16", "--noise-var", "0.01",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "estimated from" in out and "nonconvex gradient-norm bound" in out

    def test_bounds_subcommand(self, capsys):
        code = main([
            "bounds", "--l-smooth", "1", "--grad-var", "1", "--f0-gap", "1",
            "--stepsize", "0.01", "--total-iters", "1000", "--local-period", "5",
            "--batch-size", "10", "--noise-var", "0.01", "--dim", "5",
            "--devices-per-round", "4", "--strong-convexity", "0.5",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "0.200878" in out
        assert "convex optimality-gap bound" in out

    def test_inspect_subcommand(self, capsys):
        code = main(["inspect", "synthetic:5:2.0", "--n-devices", "3",
                     "--per-device", "30"])
        assert code == 0
        out = capsys.readouterr().out
        assert "feature_dim: 5" in out

    def test_inspect_adult_file(self, small_adult_csv, capsys):
        code = main(["inspect", str(small_adult_csv), "--n-devices", "4",
                     "--per-device", "400"])
        assert code == 0
        out = capsys.readouterr().out
        assert "feature_dim:" in out
        assert "categorical vocabulary sizes" in out

    def test_missing_dataset_is_config_error(self):
        assert main(["inspect", "/nonexistent/adult.csv"]) == 2
