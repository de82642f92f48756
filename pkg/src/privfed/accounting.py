"""zCDP accountant for noisy local SGD with secure aggregation.

The accounting chain for one communication round of the private scheme:

  1. Gaussian mechanism on one clipped minibatch gradient:
     sensitivity 2G/gamma, so rho_iter = 2 G^2 / (gamma^2 sigma^2).
  2. The local dataset is shuffled and partitioned into m/gamma minibatches,
     so the tau iterations of a round sweep the dataset tau*gamma/m times.
     Parallel composition over the partition plus additive composition over
     sweeps gives rho_local = (tau*gamma/m) * rho_iter = 2 tau G^2 / (m gamma sigma^2).
  3. With secure aggregation the server only sees the sum of the r selected
     local models. The sum carries r independent copies of the local noise at
     the sensitivity of a single local model (2 eta tau G / gamma), dividing
     the budget by r: rho_round = 2 tau G^2 / (r m gamma sigma^2).

Across a whole run, a device selected in C_i rounds spends C_i * rho_round,
converted to (epsilon, delta)-DP via
epsilon = rho + 2*sqrt(rho*log(1/delta)).

All functions are pure and operate on plain floats; values are exact
closed forms, no numeric search anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

__all__ = [
    "PrivacyParams",
    "ZcdpBudget",
    "DpGuarantee",
    "gradient_sensitivity",
    "local_model_sensitivity",
    "gaussian_rho",
    "compose",
    "round_rho_per_device",
    "round_rho_closed_form",
    "round_rho_breakdown",
    "zcdp_to_dp",
    "total_epsilon",
    "expected_participation",
    "inverse_rho",
    "calibrate_sigma",
    "dpsgd_epsilon",
    "dpsgd_calibrate_sigma",
]


@dataclass(frozen=True)
class PrivacyParams:
    """All knobs the accountant needs, validated together.

    clip_norm G > 0, batch_size gamma >= 1, local_dataset_size m >= 1,
    local_period tau >= 1, 1 <= devices_per_round r <= total_devices n,
    noise_std sigma >= 0, failure_prob delta in (0,1), stepsize eta > 0.

    Two structural requirements of the round accounting are enforced here:
    m divisible by gamma (the dataset partitions evenly into minibatches)
    and tau divisible by m/gamma (local periods sweep whole epochs).
    """

    clip_norm: float
    batch_size: int
    local_dataset_size: int
    local_period: int
    devices_per_round: int
    total_devices: int
    noise_std: float = 0.0
    failure_prob: float = 1e-4
    stepsize: float = 1.0

    def __post_init__(self):
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.local_dataset_size < 1:
            raise ValueError("local_dataset_size must be >= 1")
        if self.local_period < 1:
            raise ValueError("local_period must be >= 1")
        if not 1 <= self.devices_per_round <= self.total_devices:
            raise ValueError("need 1 <= devices_per_round <= total_devices")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if not 0 < self.failure_prob < 1:
            raise ValueError("failure_prob must be in (0, 1)")
        if self.stepsize <= 0:
            raise ValueError("stepsize must be > 0")
        if self.local_dataset_size % self.batch_size != 0:
            raise ValueError(
                f"local_dataset_size {self.local_dataset_size} not divisible "
                f"by batch_size {self.batch_size}"
            )
        batches_per_epoch = self.local_dataset_size // self.batch_size
        if self.local_period % batches_per_epoch != 0:
            raise ValueError(
                f"local_period {self.local_period} not divisible by "
                f"m/gamma = {batches_per_epoch}"
            )

    def with_noise(self, sigma: float) -> "PrivacyParams":
        return replace(self, noise_std=sigma)


@dataclass(frozen=True)
class ZcdpBudget:
    """A zCDP budget; composition of budgets is addition of rho values."""

    rho: float

    def __post_init__(self):
        if self.rho < 0 or math.isnan(self.rho):
            raise ValueError("rho must be >= 0")

    def __add__(self, other: "ZcdpBudget") -> "ZcdpBudget":
        return ZcdpBudget(self.rho + other.rho)


@dataclass(frozen=True)
class DpGuarantee:
    epsilon: float
    delta: float

    def __post_init__(self):
        if self.epsilon < 0 or math.isnan(self.epsilon):
            raise ValueError("epsilon must be >= 0")
        if not 0 < self.delta < 1:
            raise ValueError("delta must be in (0, 1)")


def gradient_sensitivity(clip_norm: float, batch_size: int) -> float:
    """L2 sensitivity of a clipped minibatch-mean gradient: 2G/gamma."""
    if clip_norm <= 0:
        raise ValueError("clip_norm must be > 0")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    return 2.0 * clip_norm / batch_size


def local_model_sensitivity(
    stepsize: float, local_period: int, clip_norm: float, batch_size: int
) -> float:
    """L2 sensitivity of a local model after tau noisy steps: 2*eta*tau*G/gamma."""
    if stepsize <= 0:
        raise ValueError("stepsize must be > 0")
    if local_period < 1:
        raise ValueError("local_period must be >= 1")
    return stepsize * local_period * gradient_sensitivity(clip_norm, batch_size)


def gaussian_rho(sensitivity: float, sigma: float) -> ZcdpBudget:
    """Gaussian mechanism budget: rho = sensitivity^2 / (2 sigma^2)."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if sensitivity < 0:
        raise ValueError("sensitivity must be >= 0")
    return ZcdpBudget(sensitivity * sensitivity / (2.0 * sigma * sigma))


def compose(budgets: Iterable[ZcdpBudget]) -> ZcdpBudget:
    """Additive composition; the empty composition is a zero budget."""
    return ZcdpBudget(sum(b.rho for b in budgets))


def round_rho_closed_form(
    clip_norm: float,
    batch_size: int,
    local_dataset_size: int,
    local_period: int,
    devices_per_round: int,
    sigma: float,
) -> float:
    """Direct evaluation of rho_round = 2*tau*G^2 / (r*m*gamma*sigma^2).

    Plain formula on scalars, used to cross-check the derivation chain in
    :func:`round_rho_per_device`; does not enforce the epoch-divisibility
    structure.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if min(clip_norm, batch_size, local_dataset_size, local_period, devices_per_round) <= 0:
        raise ValueError("all parameters must be positive")
    return (2.0 * local_period * clip_norm**2) / (
        devices_per_round * local_dataset_size * batch_size * sigma * sigma
    )


def round_rho_breakdown(p: PrivacyParams) -> tuple[ZcdpBudget, ZcdpBudget, ZcdpBudget]:
    """(rho_iter, rho_local, rho_round) for one communication round.

    rho_iter   one noisy minibatch gradient release,
    rho_local  the uploaded local model after tau iterations (shuffled
               partition + sweep composition),
    rho_round  the securely aggregated sum of r local models.
    """
    if p.noise_std <= 0:
        raise ValueError("sigma must be > 0 to account a noisy round")
    rho_iter = gaussian_rho(
        gradient_sensitivity(p.clip_norm, p.batch_size), p.noise_std
    )
    # tau*gamma/m full sweeps; each sweep costs max over its disjoint
    # minibatches = rho_iter, sweeps compose additively.
    sweeps = (p.local_period * p.batch_size) // p.local_dataset_size
    rho_local = compose([rho_iter] * sweeps)
    # The sum of r local models carries r independent noise copies: effective
    # per-model Gaussian variance sigma_local^2 = Delta_local^2 / (2 rho_local)
    # becomes r * sigma_local^2 at unchanged sensitivity Delta_local.
    delta_local = local_model_sensitivity(
        p.stepsize, p.local_period, p.clip_norm, p.batch_size
    )
    sigma_local_sq = delta_local**2 / (2.0 * rho_local.rho)
    rho_round = gaussian_rho(
        delta_local, math.sqrt(p.devices_per_round * sigma_local_sq)
    )
    return rho_iter, rho_local, rho_round


def round_rho_per_device(p: PrivacyParams) -> ZcdpBudget:
    """zCDP spent by a participating device in one round of the scheme."""
    return round_rho_breakdown(p)[2]


def zcdp_to_dp(rho: ZcdpBudget, delta: float) -> DpGuarantee:
    """Convert rho-zCDP to (epsilon, delta)-DP.

    epsilon = rho + 2*sqrt(rho * log(1/delta)).
    """
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    eps = rho.rho + 2.0 * math.sqrt(rho.rho * math.log(1.0 / delta))
    return DpGuarantee(eps, delta)


def total_epsilon(p: PrivacyParams, rounds_participated: float) -> DpGuarantee:
    """(epsilon_i, delta) after a device participates in C_i rounds.

    Accepts a realized integer count or the expectation T*r/n.
    """
    if rounds_participated < 0:
        raise ValueError("rounds_participated must be >= 0")
    rho_total = ZcdpBudget(rounds_participated * round_rho_per_device(p).rho)
    return zcdp_to_dp(rho_total, p.failure_prob)


def expected_participation(rounds: int, devices_per_round: int, total_devices: int) -> float:
    """Expected participation count T*r/n under uniform selection."""
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    if not 1 <= devices_per_round <= total_devices:
        raise ValueError("need 1 <= devices_per_round <= total_devices")
    return rounds * devices_per_round / total_devices


def inverse_rho(epsilon: float, delta: float) -> float:
    """Largest rho whose (epsilon, delta) conversion meets a target epsilon.

    Inverts epsilon = rho + 2*sqrt(rho*log(1/delta)) exactly:
    rho = (sqrt(log(1/delta) + epsilon) - sqrt(log(1/delta)))^2.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    log_term = math.log(1.0 / delta)
    root = math.sqrt(log_term + epsilon) - math.sqrt(log_term)
    return root * root


def calibrate_sigma(
    epsilon: float,
    delta: float,
    rounds_participated: float,
    p: PrivacyParams,
    amplification: bool = True,
) -> float:
    """Per-coordinate noise std achieving a target (epsilon, delta).

    Solves total_epsilon(sigma) = epsilon in closed form; ``p.noise_std`` is
    ignored. With ``amplification=False`` the secure-aggregation factor r is
    dropped, which calibrates the variant that uploads plain local models.
    """
    if rounds_participated <= 0:
        raise ValueError("rounds_participated must be > 0")
    rho_star = inverse_rho(epsilon, delta)
    r = p.devices_per_round if amplification else 1
    sigma_sq = (2.0 * rounds_participated * p.local_period * p.clip_norm**2) / (
        r * p.local_dataset_size * p.batch_size * rho_star
    )
    return math.sqrt(sigma_sq)


def dpsgd_epsilon(
    clip_norm: float,
    total_devices: int,
    batch_size: int,
    sigma: float,
    delta: float,
    rounds_participated: float,
) -> DpGuarantee:
    """Guarantee of the one-step-per-round baseline.

    epsilon = 2*C_i*G^2/(n*gamma^2*sigma^2)
              + 2*sqrt(2*log(1/delta)*C_i*G^2/(n*gamma^2*sigma^2)).
    """
    if min(clip_norm, total_devices, batch_size, sigma, rounds_participated) <= 0:
        raise ValueError("all parameters must be positive")
    rho = (2.0 * rounds_participated * clip_norm**2) / (
        total_devices * batch_size**2 * sigma * sigma
    )
    return zcdp_to_dp(ZcdpBudget(rho), delta)


def dpsgd_calibrate_sigma(
    epsilon: float,
    delta: float,
    rounds_participated: float,
    clip_norm: float,
    total_devices: int,
    batch_size: int,
) -> float:
    """Noise std giving the baseline a matched (epsilon, delta)."""
    rho_star = inverse_rho(epsilon, delta)
    sigma_sq = (2.0 * rounds_participated * clip_norm**2) / (
        total_devices * batch_size**2 * rho_star
    )
    return math.sqrt(sigma_sq)
