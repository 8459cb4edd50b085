"""Differentiable output heads built on the autodiff graph: the continuous
entropy-regularizing activation, the classic bounded log-std head, the
truncated-Gaussian log-density and reparameterized sampler, and the discrete
entropy-regularizing logit head."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .era_continuous import EraContinuousConfig
from .era_discrete import KAPPA_FLOOR, EraDiscreteConfig
from .numerics import LOG_SQRT_2PI_E, SQRT_2PI


def era_log_sigma(sigma_hat: Tensor, cfg: EraContinuousConfig, delta: float | Tensor = 0.0) -> Tensor:
    """Tape version of the continuous activation: rows of sigma_hat are
    (batch, dim) raw outputs; returns log sigma' within the configured bounds."""
    log_max = math.log(cfg.sigma_max)
    log_min = math.log(cfg.sigma_min)
    w = ad.softmax(sigma_hat)
    base = cfg.target_entropy - cfg.dim * LOG_SQRT_2PI_E - cfg.dim * log_max
    if isinstance(delta, Tensor):
        slope_w = w * delta + w * base
    else:
        slope_w = w * (base + delta)
    log_sigma = slope_w + log_max
    return ad.minimum(ad.maximum(log_sigma, log_min), log_max)


def bounded_log_sigma(pre_std: Tensor, sigma_min: float, sigma_max: float) -> Tensor:
    """Classic tanh-interpolated log-std head used by the non-ERA baseline."""
    log_min, log_max = math.log(sigma_min), math.log(sigma_max)
    return (ad.tanh(pre_std) + 1.0) * (0.5 * (log_max - log_min)) + log_min


def truncated_log_prob_t(mu: Tensor, sigma: Tensor, action: Tensor | np.ndarray) -> Tensor:
    """Row-wise log-density of actions in [-1,1]^D under truncation; returns a
    (batch,) tensor.  The action may itself be a graph tensor."""
    if not isinstance(action, Tensor):
        action = Tensor(np.asarray(action, dtype=np.float64))
    alpha = (-1.0 - mu) / sigma
    beta = (1.0 - mu) / sigma
    z = ad.normal_cdf_t(beta) - ad.normal_cdf_t(alpha)
    t = (action - mu) / sigma
    log_terms = t * t * (-0.5) - ad.log(sigma) - ad.log(z) - math.log(SQRT_2PI)
    return log_terms.sum(axis=-1)


def truncated_rsample(mu: Tensor, sigma: Tensor, uniforms: np.ndarray) -> Tensor:
    """Reparameterized truncated-Gaussian sample: inverse-CDF transform of
    fixed uniforms, differentiable through mu and sigma."""
    u = np.clip(np.asarray(uniforms, dtype=np.float64), 1e-12, 1.0 - 1e-12)
    p_lo = ad.normal_cdf_t((-1.0 - mu) / sigma)
    p_hi = ad.normal_cdf_t((1.0 - mu) / sigma)
    p = p_lo + (p_hi - p_lo) * u
    p = ad.clip(p, 1e-12, 1.0 - 1e-12)
    a = mu + sigma * ad.normal_icdf_t(p)
    return ad.straight_through_clip(a, -1.0, 1.0)


def truncated_sample_np(mu: np.ndarray, sigma: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Tape-free counterpart of truncated_rsample for target computation."""
    from .numerics import normal_icdf_arr

    u = np.clip(np.asarray(uniforms, dtype=np.float64), 1e-12, 1.0 - 1e-12)
    p_lo = _phi_np((-1.0 - mu) / sigma)
    p_hi = _phi_np((1.0 - mu) / sigma)
    p = np.clip(p_lo + (p_hi - p_lo) * u, 1e-12, 1.0 - 1e-12)
    return np.clip(mu + sigma * normal_icdf_arr(p), -1.0, 1.0)


def _phi_np(x: np.ndarray) -> np.ndarray:
    from .numerics import normal_cdf_arr

    return normal_cdf_arr(x)


def truncated_log_prob_np(mu: np.ndarray, sigma: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Row-wise truncated log-density without the tape."""
    alpha = (-1.0 - mu) / sigma
    beta = (1.0 - mu) / sigma
    z = _phi_np(beta) - _phi_np(alpha)
    t = (action - mu) / sigma
    return np.sum(-0.5 * t * t - np.log(sigma) - np.log(z) - math.log(SQRT_2PI), axis=-1)


def era_logits_t(logits: Tensor, cfg: EraDiscreteConfig) -> Tensor:
    """Tape version of the discrete activation (approximate inverse), acting on
    the last axis of a (batch, classes) tensor.

    The published module also subtracts a detached row-max from the *input*
    logits; the result is never used downstream, so only the min-shift on the
    output is implemented.
    """
    ub = cfg.upper_bound()
    p = ad.softmax(logits)
    raw = (1.0 - p) * ((cfg.c_h0() - cfg.classes * ub) / (cfg.classes - 1)) + ub
    kap = ad.maximum(raw, KAPPA_FLOOR)
    # The floor at 1e-12 also cuts the sqrt's unbounded slope at u -> 0, which
    # is only reached when an allocation saturates at 1/e (tau = e exactly).
    u = ad.maximum(-ad.log(kap) - 1.0, 1e-12)
    z_new = -ad.sqrt(u * 2.0) - u * 0.75 - 1.0
    shift = np.min(z_new.data, axis=-1, keepdims=True)  # detached, cosmetic
    return z_new - shift
