"""Calculators for the scheme's convergence guarantees.

Nonconvex (average squared gradient norm over K = T*tau iterations):

    2*(f(theta0)-f*)/(eta*K) + eta*L*beta^2/(2*gamma) + eta*L*d*sigma^2/(2*r)
    + (tau-1)*(2*tau-1) * ( 2*eta^2*L^2*beta^2/(3*gamma)
                            + eta^2*L^2*d*sigma^2*(r+1)/(3*r) )

Strongly convex (average optimality gap):

    (1-eta*lambda)/(K*eta*lambda)*(f(theta0)-f*) + eta*L*beta^2/(4*lambda*gamma)
    + eta*L*d*sigma^2/(4*r*lambda)
    + eta^2*L^2*(tau-1)*(2*tau-1) * ( beta^2/(3*lambda*gamma)
                                      + d*sigma^2*(r+1)/(6*r*lambda) )

Both hold under the stepsize condition 5*eta*L + 3*tau^2*eta^2*L^2 <= 1,
which is reported, never enforced: experiments tune the stepsize on
validation data. The curvature constants L and beta^2 are not part of the
training pipeline; ``estimate_bound_inputs`` provides rough empirical values
so the calculators can be driven from data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import EncodedDataset
from .models import ModelParams, gradient, init_params, param_count, per_example_gradients
from .rng import derive_rng

__all__ = [
    "BoundInputs",
    "bound_nonconvex",
    "bound_convex",
    "lr_condition",
    "estimate_smoothness",
    "estimate_bound_inputs",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundInputs:
    l_smooth: float  # L
    grad_var: float  # beta^2
    f0_gap: float  # f(theta0) - f*
    stepsize: float  # eta
    total_iters: int  # K = T*tau
    local_period: int  # tau
    batch_size: int  # gamma
    noise_var: float  # sigma^2
    dim: int  # d
    devices_per_round: int  # r
    total_devices: int  # n
    strong_convexity: float | None = None  # lambda, convex bound only

    def __post_init__(self):
        positives = {
            "l_smooth": self.l_smooth,
            "grad_var": self.grad_var,
            "f0_gap": self.f0_gap,
            "stepsize": self.stepsize,
            "total_iters": self.total_iters,
            "local_period": self.local_period,
            "batch_size": self.batch_size,
            "dim": self.dim,
            "devices_per_round": self.devices_per_round,
            "total_devices": self.total_devices,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.noise_var < 0:
            raise ValueError("noise_var must be >= 0")
        if self.strong_convexity is not None:
            if self.strong_convexity <= 0:
                raise ValueError("strong_convexity must be > 0")
            if self.strong_convexity > self.l_smooth:
                raise ValueError("strong_convexity cannot exceed l_smooth")


def lr_condition(stepsize: float, l_smooth: float, local_period: int) -> tuple[bool, float]:
    """Whether 5*eta*L + 3*tau^2*eta^2*L^2 <= 1, and the slack 1 - lhs."""
    if stepsize <= 0 or l_smooth <= 0 or local_period < 1:
        raise ValueError("stepsize, l_smooth must be > 0 and local_period >= 1")
    lhs = 5.0 * stepsize * l_smooth + 3.0 * (local_period * stepsize * l_smooth) ** 2
    return lhs <= 1.0, 1.0 - lhs


def _warn_if_condition_violated(b: BoundInputs) -> None:
    ok, slack = lr_condition(b.stepsize, b.l_smooth, b.local_period)
    if not ok:
        logger.warning(
            "stepsize condition violated (slack %.3g); the bound is not guaranteed",
            slack,
        )


def bound_nonconvex(b: BoundInputs) -> float:
    """Bound on the run-averaged expected squared gradient norm."""
    _warn_if_condition_violated(b)
    eta, big_l, tau = b.stepsize, b.l_smooth, b.local_period
    descent = 2.0 * b.f0_gap / (eta * b.total_iters)
    gradient_noise = eta * big_l * b.grad_var / (2.0 * b.batch_size)
    dp_noise = eta * big_l * b.dim * b.noise_var / (2.0 * b.devices_per_round)
    drift = (tau - 1.0) * (2.0 * tau - 1.0) * (
        2.0 * eta**2 * big_l**2 * b.grad_var / (3.0 * b.batch_size)
        + eta**2 * big_l**2 * b.dim * b.noise_var * (b.devices_per_round + 1.0)
        / (3.0 * b.devices_per_round)
    )
    return descent + gradient_noise + dp_noise + drift


def bound_convex(b: BoundInputs) -> float:
    """Bound on the run-averaged expected optimality gap (strongly convex)."""
    if b.strong_convexity is None:
        raise ValueError("the convex bound needs strong_convexity")
    lam = b.strong_convexity
    eta, big_l, tau = b.stepsize, b.l_smooth, b.local_period
    if eta * lam >= 1.0:
        raise ValueError("need stepsize * strong_convexity < 1")
    _warn_if_condition_violated(b)
    descent = (1.0 - eta * lam) / (b.total_iters * eta * lam) * b.f0_gap
    gradient_noise = eta * big_l * b.grad_var / (4.0 * lam * b.batch_size)
    dp_noise = eta * big_l * b.dim * b.noise_var / (4.0 * b.devices_per_round * lam)
    drift = eta**2 * big_l**2 * (tau - 1.0) * (2.0 * tau - 1.0) * (
        b.grad_var / (3.0 * lam * b.batch_size)
        + b.dim * b.noise_var * (b.devices_per_round + 1.0)
        / (6.0 * b.devices_per_round * lam)
    )
    return descent + gradient_noise + dp_noise + drift


def estimate_smoothness(grad_fn, center: np.ndarray, n_pairs: int = 1000,
                        radius: float = 1.0, rng: np.random.Generator | None = None) -> float:
    """Max gradient-difference ratio over random point pairs near ``center``.

    A lower estimate of the true Lipschitz constant of grad_fn; heuristic by
    construction.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    d = center.shape[0]
    best = 0.0
    for _ in range(n_pairs):
        u = rng.standard_normal(d)
        v = rng.standard_normal(d)
        u *= radius * rng.random() ** (1.0 / d) / np.linalg.norm(u)
        v *= radius * rng.random() ** (1.0 / d) / np.linalg.norm(v)
        gap = np.linalg.norm(grad_fn(center + u) - grad_fn(center + v))
        dist = np.linalg.norm(u - v)
        if dist > 0:
            best = max(best, gap / dist)
    return best


def estimate_bound_inputs(
    dataset: EncodedDataset,
    shape: tuple[int, ...],
    seed: int = 0,
    n_pairs: int = 1000,
) -> dict[str, float]:
    """Empirical L and beta^2 at the run's initial model (heuristic).

    beta^2 is the worst per-device mean squared deviation of single-example
    gradients from the device gradient; L comes from
    :func:`estimate_smoothness` applied to the pooled training objective.
    Deterministic given the seed. Fills only what data can provide:
    l_smooth, grad_var and dim.
    """
    rng = derive_rng(seed, "bound-estimates")
    theta0 = init_params(shape, rng)

    grad_var = 0.0
    for dev in dataset.devices:
        batch = (dev.x_train, dev.y_train)
        grads = per_example_gradients(theta0, batch)
        deviations = grads - grads.mean(axis=0)
        grad_var = max(grad_var, float((deviations**2).sum(axis=1).mean()))

    x_pool = np.concatenate([d.x_train for d in dataset.devices])
    y_pool = np.concatenate([d.y_train for d in dataset.devices])

    def grad_fn(values: np.ndarray) -> np.ndarray:
        return gradient(ModelParams(values, shape), (x_pool, y_pool))

    l_smooth = estimate_smoothness(grad_fn, theta0.values, n_pairs=n_pairs, rng=rng)
    return {"l_smooth": l_smooth, "grad_var": grad_var, "dim": param_count(shape)}
