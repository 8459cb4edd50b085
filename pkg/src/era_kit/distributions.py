"""Policy distributions: diagonal Gaussian, truncated Gaussian on [-1,1]^D,
tanh-squashed Gaussian, and categorical, with sampling, log-density and entropy.

Truncation is fixed to the [-1, 1] action hypercube.  Sampling takes an
explicit numpy Generator owned by the caller; nothing here holds state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import (
    LOG_SQRT_2PI_E,
    SQRT_2PI,
    log_sum_exp,
    normal_cdf,
    normal_icdf,
    normal_pdf,
    softplus,
)

# Z below this means the mean sits astronomically far outside [-1, 1] and the
# truncated density is numerically void.
_Z_FLOOR = 1e-300


class DegenerateMassError(ValueError):
    """Raised when the truncation interval carries no representable mass."""


@dataclass
class GaussianPolicyParams:
    """Per-dimension mean and standard deviation with configured bounds."""

    mu: np.ndarray
    sigma: np.ndarray
    sigma_min: float
    sigma_max: float

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        self.sigma = np.atleast_1d(np.asarray(self.sigma, dtype=np.float64))
        if self.mu.shape != self.sigma.shape:
            raise ValueError("mu and sigma must have the same length")
        if not np.all(np.isfinite(self.mu)):
            raise ValueError("mu must be finite")
        if not 0.0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        tol = 1e-12
        if np.any(self.sigma < self.sigma_min - tol) or np.any(self.sigma > self.sigma_max + tol):
            raise ValueError("sigma outside [sigma_min, sigma_max]")

    @property
    def dim(self) -> int:
        return self.mu.size


@dataclass
class TruncatedGaussianAux:
    """Standardized truncation bounds and per-dimension mass for [-1, 1]."""

    alpha: np.ndarray
    beta: np.ndarray
    z: np.ndarray


@dataclass
class CategoricalLogits:
    """Unnormalized logits; probabilities are softmax(z)."""

    z: np.ndarray

    def __post_init__(self):
        self.z = np.atleast_1d(np.asarray(self.z, dtype=np.float64))
        if not np.all(np.isfinite(self.z)):
            raise ValueError("logits must be finite")

    @property
    def dim(self) -> int:
        return self.z.size


def truncated_aux(params: GaussianPolicyParams) -> TruncatedGaussianAux:
    """Compute alpha, beta, Z for truncation to [-1, 1] per dimension."""
    alpha = (-1.0 - params.mu) / params.sigma
    beta = (1.0 - params.mu) / params.sigma
    # Evaluate the mass with non-positive CDF arguments: when both bounds sit
    # in the upper tail, Phi(beta) - Phi(alpha) cancels catastrophically near
    # 1.0, while the mirrored form Phi(-alpha) - Phi(-beta) stays relatively
    # accurate down to the erfc underflow limit.
    z = np.array([
        normal_cdf(-a) - normal_cdf(-b) if a > 0.0 else normal_cdf(b) - normal_cdf(a)
        for a, b in zip(alpha, beta)
    ])
    if np.any(z < _Z_FLOOR):
        raise DegenerateMassError("truncation interval carries no mass")
    return TruncatedGaussianAux(alpha=alpha, beta=beta, z=z)


def gaussian_entropy(params: GaussianPolicyParams) -> float:
    """Entropy of the diagonal Gaussian: (1/2) sum log(2 pi e sigma_i^2)."""
    return float(np.sum(LOG_SQRT_2PI_E + np.log(params.sigma)))


def truncated_entropy(params: GaussianPolicyParams) -> float:
    """Closed-form entropy of the Gaussian truncated to [-1, 1]^D."""
    aux = truncated_aux(params)
    total = 0.0
    for i in range(params.dim):
        a, b, z = aux.alpha[i], aux.beta[i], aux.z[i]
        total += math.log(params.sigma[i] * z) + LOG_SQRT_2PI_E
        total -= (b * normal_pdf(b) - a * normal_pdf(a)) / (2.0 * z)
    return total


def truncated_entropy_quadrature(params: GaussianPolicyParams, panels: int = 16384) -> float:
    """Brute-force oracle: integral of -p log p over [-1, 1] per dimension.

    Integrates in the standardized coordinate t = (x - mu) / sigma over
    [alpha, beta], where the integrand keeps unit scale even when the
    truncation window sits far in a tail.
    """
    from .numerics import QuadratureSpec, simpson_integrate

    aux = truncated_aux(params)
    total = 0.0
    for i in range(params.dim):
        sigma, z = float(params.sigma[i]), float(aux.z[i])
        log_norm = math.log(sigma * z)

        def neg_p_log_p(t: float) -> float:
            # density in t-space is phi(t)/Z; log density in x-space shifts
            # by -log(sigma Z)
            w = normal_pdf(t) / z
            if w <= 0.0:
                return 0.0
            log_p = -0.5 * t * t - math.log(SQRT_2PI) - log_norm
            return -w * log_p

        total += simpson_integrate(
            neg_p_log_p, QuadratureSpec(float(aux.alpha[i]), float(aux.beta[i]), panels)
        )
    return total


def truncated_sample(params: GaussianPolicyParams, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sample from the truncated Gaussian; always inside [-1, 1]."""
    aux = truncated_aux(params)
    out = np.empty(params.dim)
    for i in range(params.dim):
        lo = normal_cdf(aux.alpha[i])
        hi = normal_cdf(aux.beta[i])
        u = rng.uniform(lo, hi)
        u = min(max(u, 1e-15), 1.0 - 1e-15)
        out[i] = params.mu[i] + params.sigma[i] * normal_icdf(u)
    return np.clip(out, -1.0, 1.0)


def truncated_mean(params: GaussianPolicyParams) -> np.ndarray:
    """Analytic mean of the truncated Gaussian (used as a sampling oracle)."""
    aux = truncated_aux(params)
    pdf_a = np.array([normal_pdf(a) for a in aux.alpha])
    pdf_b = np.array([normal_pdf(b) for b in aux.beta])
    return params.mu + params.sigma * (pdf_a - pdf_b) / aux.z


def truncated_log_prob(params: GaussianPolicyParams, action: np.ndarray) -> float:
    """Log-density of an action inside [-1, 1]^D under the truncated Gaussian."""
    action = np.atleast_1d(np.asarray(action, dtype=np.float64))
    if action.shape != params.mu.shape:
        raise ValueError("action dimension mismatch")
    if np.any(np.abs(action) > 1.0):
        raise ValueError("action outside [-1, 1]")
    aux = truncated_aux(params)
    total = 0.0
    for i in range(params.dim):
        t = (action[i] - params.mu[i]) / params.sigma[i]
        total += -0.5 * t * t - math.log(SQRT_2PI) - math.log(params.sigma[i]) - math.log(aux.z[i])
    return total


def tanh_log_jacobian(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2) elementwise, in the softplus form that never underflows."""
    u = np.asarray(u, dtype=np.float64)
    return 2.0 * (math.log(2.0) - u - _softplus_arr(-2.0 * u))


def tanh_gaussian_log_prob(params: GaussianPolicyParams, pre_action: np.ndarray) -> float:
    """Log-density of a = tanh(u) expressed at the pre-squash point u."""
    u = np.atleast_1d(np.asarray(pre_action, dtype=np.float64))
    if u.shape != params.mu.shape:
        raise ValueError("pre_action dimension mismatch")
    t = (u - params.mu) / params.sigma
    gauss = float(np.sum(-0.5 * t * t - math.log(SQRT_2PI) - np.log(params.sigma)))
    return gauss - float(np.sum(tanh_log_jacobian(u)))


def tanh_gaussian_entropy_mc(
    params: GaussianPolicyParams, n: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte-Carlo entropy of the tanh-squashed Gaussian.

    Returns (estimate, standard error).  The per-sample integrand is the
    Gaussian negative log-density plus the log-Jacobian of the squash.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    u = params.mu + params.sigma * rng.standard_normal((n, params.dim))
    t = (u - params.mu) / params.sigma
    neg_log_gauss = np.sum(0.5 * t * t + math.log(SQRT_2PI) + np.log(params.sigma), axis=1)
    correction = np.sum(2.0 * (math.log(2.0) - u - _softplus_arr(-2.0 * u)), axis=1)
    values = neg_log_gauss + correction
    est = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return est, se


def _softplus_arr(x: np.ndarray) -> np.ndarray:
    # softplus(x) = max(x, 0) + log1p(exp(-|x|)), exact in both tails
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def categorical_entropy(logits: CategoricalLogits | np.ndarray) -> float:
    """Entropy of softmax(z), computed via log-sum-exp; lies in [0, log D]."""
    z = logits.z if isinstance(logits, CategoricalLogits) else np.asarray(logits, dtype=np.float64)
    lse = log_sum_exp(z)
    log_p = z - lse
    p = np.exp(log_p)
    return float(-np.sum(p * log_p))
