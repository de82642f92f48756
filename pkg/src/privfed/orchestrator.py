"""Federated training loop: device selection, noisy local SGD, aggregation.

Four modes share one update path and differ only in noise and aggregation:

  private_secure  noisy local SGD, models encoded/masked/summed through the
                  secure-aggregation protocol (the full scheme)
  private_plain   same noisy local SGD, plain float averaging at the server
  fedavg          no noise, plain averaging
  dpsgd           the one-local-step baseline: private_plain with tau = 1

All randomness is derived from the config seed through domain-separated
streams (selection, per-device shuffling, per-device noise, protocol seeds,
model init), so a run is a pure function of (config, dataset).

Per round the server model is evaluated on the union of the devices'
effective training sets (loss and squared gradient norm) and on the union of
test sets (accuracy). A non-finite loss or parameter aborts the run with a
diverged-run error carrying the completed records.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import accounting, secagg
from .accounting import PrivacyParams, ZcdpBudget, zcdp_to_dp
from .data import EncodedDataset
from .errors import DivergedRunError, ProtocolError
from .models import ModelParams, clipped_gradient, init_params, loss_and_gradient, accuracy
from .rng import derive_bytes, derive_rng

__all__ = [
    "MODES",
    "TrainConfig",
    "DeviceState",
    "RoundRecord",
    "RunResult",
    "select_devices",
    "next_minibatch",
    "local_update",
    "FederatedRun",
    "run_training",
]

logger = logging.getLogger(__name__)

MODES = ("private_secure", "private_plain", "fedavg", "dpsgd")


@dataclass(frozen=True)
class TrainConfig:
    mode: str
    rounds: int
    local_period: int
    devices_per_round: int
    stepsize: float
    model: str = "logistic"  # logistic | mlp
    hidden_width: int = 64
    batch_size: int | None = None  # None: largest gamma with one sweep per round
    clip_norm: float = 1.0
    noise_std: float | None = None
    target_epsilon: float | None = None
    failure_prob: float = 1e-4
    seed: int = 0
    frac_bits: int = 16
    modulus: int = 1 << 63
    codec_clip_range: float = float(1 << 20)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.model not in ("logistic", "mlp"):
            raise ValueError(f"model must be 'logistic' or 'mlp', got {self.model!r}")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.local_period < 1:
            raise ValueError("local_period must be >= 1")
        if self.mode == "dpsgd" and self.local_period != 1:
            raise ValueError("dpsgd means one local step per round (local_period=1)")
        if self.devices_per_round < 1:
            raise ValueError("devices_per_round must be >= 1")
        if self.stepsize <= 0:
            raise ValueError("stepsize must be > 0")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")
        if self.noise_std is not None and self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.mode == "fedavg":
            if self.noise_std not in (None, 0.0) or self.target_epsilon is not None:
                raise ValueError("fedavg is the non-private baseline; no noise settings")
        else:
            have_sigma = self.noise_std is not None
            have_eps = self.target_epsilon is not None
            if have_sigma == have_eps:
                raise ValueError(
                    "give exactly one of noise_std or target_epsilon for private modes"
                )
            if have_eps and self.target_epsilon <= 0:
                raise ValueError("target_epsilon must be > 0")

    def model_shape(self, feature_dim: int, n_classes: int = 2) -> tuple[int, ...]:
        if self.model == "logistic":
            return (feature_dim, n_classes)
        return (feature_dim, self.hidden_width, self.hidden_width, n_classes)


@dataclass
class DeviceState:
    device_id: int
    x_train: np.ndarray
    y_train: np.ndarray
    epoch_permutation: np.ndarray | None = None
    batch_cursor: int = 0
    participation_count: int = 0
    rng_shuffle: np.random.Generator | None = None
    rng_noise: np.random.Generator | None = None

    @property
    def n_train(self) -> int:
        return len(self.y_train)


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    train_loss: float
    grad_norm_sq: float
    test_accuracy: float
    selected: tuple[int, ...]
    participation: tuple[int, ...]
    # max |secure - plain| coordinate gap this round; 0 outside private_secure
    quantization_error: float = 0.0


@dataclass
class RunResult:
    records: list[RoundRecord]
    epsilons: list[float]  # realized per-device guarantee, inf if non-private
    delta: float
    sigma: float
    final_model: ModelParams
    batch_size: int
    effective_train_size: int
    saturation_count: int = 0
    models: list[np.ndarray] | None = None


def select_devices(n: int, r: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniformly sample r of n devices without replacement."""
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    return tuple(sorted(rng.choice(n, size=r, replace=False).tolist()))


def next_minibatch(dev: DeviceState, batch_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Next block of the device's current epoch permutation; reshuffles on wrap.

    Any m/gamma consecutive calls see every training example exactly once.
    """
    m = dev.n_train
    if batch_size < 1 or m % batch_size != 0:
        raise ValueError(
            f"training size {m} must be a positive multiple of batch size {batch_size}"
        )
    if dev.batch_cursor == 0:
        dev.epoch_permutation = dev.rng_shuffle.permutation(m)
    start = dev.batch_cursor * batch_size
    idx = dev.epoch_permutation[start : start + batch_size]
    dev.batch_cursor = (dev.batch_cursor + 1) % (m // batch_size)
    return dev.x_train[idx], dev.y_train[idx]


def local_update(
    theta: ModelParams,
    dev: DeviceState,
    local_period: int,
    stepsize: float,
    batch_size: int,
    clip_norm: float,
    noise_std: float,
    round_index: int,
) -> ModelParams:
    """tau steps of theta <- theta - eta * (clipped minibatch gradient + noise)."""
    values = theta.values.copy()
    d = values.shape[0]
    for _ in range(local_period):
        batch = next_minibatch(dev, batch_size)
        g = clipped_gradient(ModelParams(values, theta.shape), batch, clip_norm)
        if noise_std > 0:
            g = g + dev.rng_noise.normal(0.0, noise_std, size=d)
        values = values - stepsize * g
        if not np.all(np.isfinite(values)):
            raise DivergedRunError(round_index)
    return ModelParams(values, theta.shape)


class FederatedRun:
    """One fully seeded training run over an encoded dataset."""

    def __init__(self, config: TrainConfig, dataset: EncodedDataset):
        self.config = config
        n = dataset.n_devices
        if config.devices_per_round > n:
            raise ValueError(
                f"devices_per_round {config.devices_per_round} exceeds {n} devices"
            )
        self.n = n

        train_sizes = {len(d.y_train) for d in dataset.devices}
        if len(train_sizes) != 1:
            raise ValueError("devices must hold equally sized training splits")
        m0 = train_sizes.pop()
        self.batch_size, self.m_eff = self._resolve_batching(m0)

        self.devices = [
            DeviceState(
                device_id=i,
                x_train=dataset.devices[i].x_train[: self.m_eff],
                y_train=dataset.devices[i].y_train[: self.m_eff],
                rng_shuffle=derive_rng(config.seed, "shuffle", i),
                rng_noise=derive_rng(config.seed, "noise", i),
            )
            for i in range(n)
        ]

        shape = config.model_shape(dataset.feature_dim)
        self.theta0 = init_params(shape, derive_rng(config.seed, "init"))

        self.privacy_params = self._build_privacy_params()
        self.sigma = self._resolve_sigma()

        self.codec = None
        self.seeds = None
        if config.mode == "private_secure":
            self.codec = secagg.FixedPointCodec(
                frac_bits=config.frac_bits,
                modulus=config.modulus,
                clip_range=config.codec_clip_range,
                max_summands=config.devices_per_round,
            )
            self.seeds = secagg.init_seeds(n, derive_bytes(config.seed, "protocol"))

        self.x_train_union = np.concatenate([d.x_train for d in self.devices])
        self.y_train_union = np.concatenate([d.y_train for d in self.devices])
        self.x_test_union, self.y_test_union = dataset.pooled("test")

    def _resolve_batching(self, m0: int) -> tuple[int, int]:
        config = self.config
        if config.batch_size is None:
            if config.local_period > m0:
                raise ValueError(
                    f"local_period {config.local_period} exceeds training size {m0}"
                )
            m_eff = (m0 // config.local_period) * config.local_period
            gamma = m_eff // config.local_period
        else:
            gamma = config.batch_size
            if gamma < 1 or gamma > m0:
                raise ValueError(f"batch_size {gamma} not in [1, {m0}]")
            m_eff = (m0 // gamma) * gamma
        if m_eff < m0:
            logger.info(
                "truncating device training splits %d -> %d to fit batch size %d",
                m0, m_eff, gamma,
            )
        return gamma, m_eff

    def _build_privacy_params(self) -> PrivacyParams | None:
        config = self.config
        if config.mode not in ("private_secure", "private_plain"):
            return None
        return PrivacyParams(
            clip_norm=config.clip_norm,
            batch_size=self.batch_size,
            local_dataset_size=self.m_eff,
            local_period=config.local_period,
            devices_per_round=config.devices_per_round,
            total_devices=self.n,
            noise_std=0.0,
            failure_prob=config.failure_prob,
            stepsize=config.stepsize,
        )

    def _resolve_sigma(self) -> float:
        config = self.config
        if config.mode == "fedavg":
            return 0.0
        if config.noise_std is not None:
            return config.noise_std
        if config.rounds == 0:
            return 0.0
        expected = accounting.expected_participation(
            config.rounds, config.devices_per_round, self.n
        )
        if config.mode == "dpsgd":
            return accounting.dpsgd_calibrate_sigma(
                config.target_epsilon,
                config.failure_prob,
                expected,
                config.clip_norm,
                self.n,
                self.batch_size,
            )
        return accounting.calibrate_sigma(
            config.target_epsilon,
            config.failure_prob,
            expected,
            self.privacy_params,
            amplification=(config.mode == "private_secure"),
        )

    def run_round(self, theta: ModelParams, t: int) -> tuple[ModelParams, RoundRecord]:
        config = self.config
        r = config.devices_per_round
        omega = select_devices(self.n, r, derive_rng(config.seed, "select", t))
        local_models = [
            local_update(
                theta,
                self.devices[i],
                config.local_period,
                config.stepsize,
                self.batch_size,
                config.clip_norm,
                self.sigma,
                t,
            ).values
            for i in omega
        ]
        plain_average = np.mean(local_models, axis=0)

        quantization_error = 0.0
        if config.mode == "private_secure":
            d = plain_average.shape[0]
            modulus = config.modulus
            cache: dict = {}
            ciphers = [
                secagg.encrypt(
                    self.codec.encode(values),
                    secagg.compute_mask(i, omega, t, self.seeds, d, modulus, cache),
                    modulus,
                    t,
                )
                for i, values in zip(omega, local_models)
            ]
            if len(ciphers) != r:
                raise ProtocolError(f"round {t}: expected {r} ciphertexts")
            new_values = self.codec.decode_sum(secagg.aggregate(ciphers, modulus), r)
            quantization_error = float(np.max(np.abs(new_values - plain_average)))
        else:
            new_values = plain_average

        if not np.all(np.isfinite(new_values)):
            raise DivergedRunError(t)
        theta_next = ModelParams(new_values, theta.shape)
        for i in omega:
            self.devices[i].participation_count += 1

        train_loss, grad = loss_and_gradient(
            theta_next, (self.x_train_union, self.y_train_union)
        )
        if not math.isfinite(train_loss):
            raise DivergedRunError(t)
        record = RoundRecord(
            round_index=t,
            train_loss=train_loss,
            grad_norm_sq=float(grad @ grad),
            test_accuracy=accuracy(theta_next, (self.x_test_union, self.y_test_union)),
            selected=omega,
            participation=tuple(d.participation_count for d in self.devices),
            quantization_error=quantization_error,
        )
        return theta_next, record

    def run(self, keep_models: bool = False) -> RunResult:
        records: list[RoundRecord] = []
        models: list[np.ndarray] | None = [] if keep_models else None
        theta = self.theta0
        for t in range(self.config.rounds):
            try:
                theta, record = self.run_round(theta, t)
            except DivergedRunError as err:
                raise DivergedRunError(err.round_index, records) from None
            records.append(record)
            if keep_models:
                models.append(theta.values.copy())
        return RunResult(
            records=records,
            epsilons=[self.device_epsilon(d.participation_count) for d in self.devices],
            delta=self.config.failure_prob,
            sigma=self.sigma,
            final_model=theta,
            batch_size=self.batch_size,
            effective_train_size=self.m_eff,
            saturation_count=self.codec.saturation_count if self.codec else 0,
            models=models,
        )

    def device_epsilon(self, participated: int) -> float:
        """Realized guarantee from the device's actual participation count."""
        if participated == 0:
            return 0.0
        config = self.config
        if config.mode == "fedavg" or self.sigma == 0.0:
            return math.inf
        if config.mode == "dpsgd":
            return accounting.dpsgd_epsilon(
                config.clip_norm,
                self.n,
                self.batch_size,
                self.sigma,
                config.failure_prob,
                participated,
            ).epsilon
        params = self.privacy_params.with_noise(self.sigma)
        if config.mode == "private_plain":
            # no secure aggregation: the round budget is the unamplified local one
            params = replace(params, devices_per_round=1)
        rho_round = accounting.round_rho_per_device(params)
        return zcdp_to_dp(
            ZcdpBudget(participated * rho_round.rho), config.failure_prob
        ).epsilon


def run_training(
    config: TrainConfig, dataset: EncodedDataset, keep_models: bool = False
) -> RunResult:
    """Run T rounds and report each device's realized (epsilon, delta)."""
    return FederatedRun(config, dataset).run(keep_models=keep_models)
