"""Entropy-regularizing activation for bounded Gaussian control policies.

The activation maps raw network outputs (mu, sigma_hat) to final Gaussian
parameters whose entropy is architecturally at least the target H0' = H0 +
delta.  The residual delta compensates for entropy lost to action bounding
(truncation or tanh squashing) and can be a constant or learned by dual
ascent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .distributions import (
    GaussianPolicyParams,
    gaussian_entropy,
    truncated_aux,
    truncated_entropy,
)
from .numerics import LOG_SQRT_2PI_E, normal_pdf


@dataclass(frozen=True)
class EraContinuousConfig:
    """Hyperparameters of the continuous activation.

    delta_mode is "constant" (with delta_const >= 0) or "learned"; bounding
    selects the action-bounding scheme the residual refers to.  The truncated
    bounding with constant delta 0 is the stable main path; tanh with a
    learned delta is available but known to be fragile near the boundary.
    """

    target_entropy: float
    sigma_min: float
    sigma_max: float
    dim: int
    delta_mode: str = "constant"
    delta_const: float = 0.0
    bounding: str = "truncated"
    delta_lr: float = 3e-4

    def __post_init__(self):
        if not 0.0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.delta_mode not in ("constant", "learned"):
            raise ValueError(f"unknown delta_mode {self.delta_mode!r}")
        if self.bounding not in ("truncated", "tanh"):
            raise ValueError(f"unknown bounding {self.bounding!r}")
        if self.delta_mode == "constant" and self.delta_const < 0.0:
            raise ValueError("constant delta must be >= 0")
        delta0 = self.delta_const if self.delta_mode == "constant" else 0.0
        if self.target_entropy + delta0 > self.max_feasible_entropy() + 1e-12:
            raise ValueError(
                "infeasible target: H0 + delta exceeds D*log(sigma_max*sqrt(2 pi e)); "
                "every dimension would clamp"
            )

    def max_feasible_entropy(self) -> float:
        return self.dim * (math.log(self.sigma_max) + LOG_SQRT_2PI_E)


@dataclass(frozen=True)
class DeltaState:
    """Learned residual entropy, kept nonnegative by projection."""

    delta_hat: float
    learning_rate: float

    def __post_init__(self):
        if self.delta_hat < 0.0:
            raise ValueError("delta_hat must be >= 0")


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - np.max(x))
    return e / np.sum(e)


def era_activate(
    mu: np.ndarray,
    sigma_hat: np.ndarray,
    cfg: EraContinuousConfig,
    delta: float = 0.0,
) -> GaussianPolicyParams:
    """Transform raw (mu, sigma_hat) into final Gaussian parameters.

    The softmax of sigma_hat allocates the entropy budget H0' across
    dimensions; the clamp at log sigma_min can only raise total entropy, and
    a final clip at log sigma_max keeps the bounds contract.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    sigma_hat = np.atleast_1d(np.asarray(sigma_hat, dtype=np.float64))
    if mu.size != cfg.dim or sigma_hat.size != cfg.dim:
        raise ValueError("mu and sigma_hat must have length cfg.dim")
    if delta < 0.0:
        raise ValueError("delta must be >= 0")
    h0p = cfg.target_entropy + delta
    slope = h0p - cfg.dim * LOG_SQRT_2PI_E - cfg.dim * math.log(cfg.sigma_max)
    log_sigma = math.log(cfg.sigma_max) + slope * _softmax(sigma_hat)
    log_sigma = np.maximum(log_sigma, math.log(cfg.sigma_min))
    log_sigma = np.minimum(log_sigma, math.log(cfg.sigma_max))
    return GaussianPolicyParams(
        mu=mu, sigma=np.exp(log_sigma), sigma_min=cfg.sigma_min, sigma_max=cfg.sigma_max
    )


class RunningMean:
    """EMA of the batch statistic e_bar, for evaluation-mode activation."""

    def __init__(self, momentum: float = 0.9):
        self.momentum = momentum
        self.value: float | None = None

    def update(self, x: float) -> float:
        self.value = x if self.value is None else self.momentum * self.value + (1.0 - self.momentum) * x
        return self.value


def era_activate_batch(
    mu: np.ndarray,
    sigma_hat: np.ndarray,
    cfg: EraContinuousConfig,
    delta: float = 0.0,
    e_bar: float | None = None,
) -> list[GaussianPolicyParams]:
    """Batch-level variant: the softmax denominator is replaced by the mean of
    exp(sigma_hat) over the whole batch, constraining the batch-average entropy.

    Pass e_bar (e.g. a RunningMean value) to reproduce training-time statistics
    at evaluation; by default it is computed from the given batch.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma_hat = np.asarray(sigma_hat, dtype=np.float64)
    if mu.ndim != 2 or sigma_hat.shape != mu.shape or mu.shape[1] != cfg.dim:
        raise ValueError("expected matrices of shape (N, dim)")
    if mu.shape[0] == 0:
        raise ValueError("empty batch")
    if delta < 0.0:
        raise ValueError("delta must be >= 0")
    h0p = cfg.target_entropy + delta
    exp_s = np.exp(sigma_hat)
    if e_bar is None:
        e_bar = float(np.mean(exp_s))
    slope = h0p / cfg.dim - LOG_SQRT_2PI_E - math.log(cfg.sigma_max)
    log_sigma = math.log(cfg.sigma_max) + slope * exp_s / e_bar
    log_sigma = np.maximum(log_sigma, math.log(cfg.sigma_min))
    log_sigma = np.minimum(log_sigma, math.log(cfg.sigma_max))
    return [
        GaussianPolicyParams(
            mu=mu[n], sigma=np.exp(log_sigma[n]), sigma_min=cfg.sigma_min, sigma_max=cfg.sigma_max
        )
        for n in range(mu.shape[0])
    ]


def residual_loss(delta_hat: float, entropies: np.ndarray, h0: float) -> float:
    """Dual loss delta_hat * (mean entropy - H0); descent on delta_hat raises it
    exactly when the policy runs an entropy deficit."""
    entropies = np.asarray(entropies, dtype=np.float64)
    if entropies.size == 0:
        raise ValueError("entropies must be nonempty")
    return float(delta_hat * (np.mean(entropies) - h0))


def update_delta(state: DeltaState, entropies: np.ndarray, h0: float) -> DeltaState:
    """One projected dual-ascent step on the learned residual."""
    entropies = np.asarray(entropies, dtype=np.float64)
    if entropies.size == 0:
        raise ValueError("entropies must be nonempty")
    grad = float(np.mean(entropies)) - h0
    return replace(state, delta_hat=max(0.0, state.delta_hat - state.learning_rate * grad))


def delta_tn_analytic(params: GaussianPolicyParams) -> float:
    """Residual entropy of truncation: gaussian entropy minus truncated entropy,
    in the closed form that avoids computing either entropy."""
    aux = truncated_aux(params)
    total = 0.0
    for i in range(params.dim):
        a, b, z = aux.alpha[i], aux.beta[i], aux.z[i]
        total -= math.log(z) - (b * normal_pdf(b) - a * normal_pdf(a)) / (2.0 * z)
    return total


def delta_tanh_mc(
    params: GaussianPolicyParams, n: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte-Carlo residual entropy of tanh squashing: -E[sum log(1 - tanh(u)^2)].

    Returns (estimate, standard error); always nonnegative in expectation.
    """
    from .distributions import tanh_log_jacobian

    if n < 1:
        raise ValueError("n must be >= 1")
    u = params.mu + params.sigma * rng.standard_normal((n, params.dim))
    values = -np.sum(tanh_log_jacobian(u), axis=1)
    est = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return est, se


def entropy_for_residual(
    params: GaussianPolicyParams,
    cfg: EraContinuousConfig,
    rng: np.random.Generator | None = None,
    mc_samples: int = 256,
) -> float:
    """Final-policy entropy fed to the residual loss: analytic for truncated
    bounding, Monte-Carlo for tanh."""
    if cfg.bounding == "truncated":
        return truncated_entropy(params)
    if rng is None:
        raise ValueError("tanh bounding needs an rng for the MC estimate")
    est, _ = delta_tanh_mc(params, mc_samples, rng)
    return gaussian_entropy(params) - est
