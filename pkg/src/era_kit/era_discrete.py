"""Entropy-regularizing activation for softmax policies.

Each class receives an entropy allocation kappa_i in [0, log(tau)/tau] via a
clamped affine map of its softmax probability; mapping allocations back to
logits through the inverse of h(x) = -x e^x yields a distribution whose
entropy provably stays above the target.  Both the paper-style approximate
inverse and an exact root-finding inverse are provided; the exact one serves
as the oracle in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import CategoricalLogits

# h^-1(0) would be -inf; a kappa this small denotes probability -> 0.
KAPPA_FLOOR = 1e-12
_INV_E = 1.0 / math.e


@dataclass(frozen=True)
class EraDiscreteConfig:
    """Target entropy H0, scale tau >= e, and class count D.

    C_H0 = exp(H0 - 1) must lie in [log(tau)/tau, D*log(tau)/tau]: the lower
    bound keeps the affine slope nonpositive, the upper bound keeps every
    allocation inside the invertible range of h.
    """

    target_entropy: float
    classes: int
    tau: float = 4.0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least 2 classes")
        if self.tau < math.e - 1e-12:
            raise ValueError("tau must be >= e")
        if self.target_entropy > math.log(self.classes) + 1e-12:
            raise ValueError("target entropy above log D is unreachable")
        ub = self.upper_bound()
        c = self.c_h0()
        if c < ub - 1e-12:
            raise ValueError("C_H0 = exp(H0 - 1) must be >= log(tau)/tau")
        if c > self.classes * ub + 1e-9:
            raise ValueError("C_H0 must be <= D * log(tau)/tau")

    def upper_bound(self) -> float:
        return math.log(self.tau) / self.tau

    def c_h0(self) -> float:
        return math.exp(self.target_entropy - 1.0)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z))
    return e / np.sum(e)


def kappa(logits: CategoricalLogits | np.ndarray, cfg: EraDiscreteConfig) -> np.ndarray:
    """Per-class entropy allocation: affine in softmax probability, clamped at 0.

    Without clamping the allocations sum to exactly C_H0; clamping can only
    raise the sum.
    """
    z = logits.z if isinstance(logits, CategoricalLogits) else np.asarray(logits, dtype=np.float64)
    if z.size != cfg.classes:
        raise ValueError("logit count does not match cfg.classes")
    p = _softmax(z)
    ub = cfg.upper_bound()
    raw = ub + (cfg.c_h0() - cfg.classes * ub) * (1.0 - p) / (cfg.classes - 1)
    return np.maximum(raw, 0.0)


def kappa_listing_form(logits: np.ndarray, cfg: EraDiscreteConfig) -> np.ndarray:
    """Algebraically identical slope/intercept form (slope * p + b), kept as a
    cross-check that the two published parameterizations agree."""
    z = np.asarray(logits, dtype=np.float64)
    ub = cfg.upper_bound()
    slope = (ub - cfg.c_h0() / cfg.classes) / (1.0 - 1.0 / cfg.classes)
    b = (cfg.c_h0() - slope) / cfg.classes
    return np.maximum(slope * _softmax(z) + b, 0.0)


def h_inv_approx(x):
    """Approximate inverse of h(x) = -x e^x on (0, 1/e].

    With u = -1 - ln(x): returns -1 - sqrt(2u) - (3/4) u.  Inputs are floored
    at 1e-12 before the log.  Accepts scalars or arrays.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr > _INV_E + 1e-12):
        raise ValueError("h_inv_approx domain is (0, 1/e]")
    if np.any(arr <= 0.0):
        raise ValueError("h_inv_approx requires x > 0")
    u = np.maximum(-1.0 - np.log(np.maximum(arr, KAPPA_FLOOR)), 0.0)
    out = -1.0 - np.sqrt(2.0 * u) - 0.75 * u
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def h_inv_exact(x: float) -> float:
    """Exact inverse of h on (0, 1/e]: the unique y <= -1 with -y e^y = x,
    found by safeguarded Newton iteration to |h(y) - x| <= 1e-12."""
    if not 0.0 < x <= _INV_E + 1e-15:
        raise ValueError("h_inv_exact domain is (0, 1/e]")

    def h(y: float) -> float:
        return -y * math.exp(y)

    # h is increasing on (-inf, -1]; bracket from below by walking left.
    hi = -1.0
    lo = -2.0
    while h(lo) > x:
        lo *= 2.0
        if lo < -800.0:
            return lo  # x below double-precision resolution of h
    y = 0.5 * (lo + hi)
    for _ in range(200):
        f = h(y) - x
        if abs(f) <= 1e-12:
            return y
        if f > 0.0:
            hi = y
        else:
            lo = y
        dh = -(1.0 + y) * math.exp(y)
        step_ok = dh > 0.0
        y_new = y - f / dh if step_ok else 0.5 * (lo + hi)
        if not (lo <= y_new <= hi):
            y_new = 0.5 * (lo + hi)
        y = y_new
    return y


def era_logits(
    logits: CategoricalLogits | np.ndarray,
    cfg: EraDiscreteConfig,
    inverse: str = "approx",
) -> CategoricalLogits:
    """Transform logits so softmax of the result has entropy >= the target.

    The allocations are floored at KAPPA_FLOOR before inversion, and the
    output is shifted by its (detached) minimum; softmax is shift-invariant so
    the shift is cosmetic.
    """
    z = logits.z if isinstance(logits, CategoricalLogits) else np.asarray(logits, dtype=np.float64)
    k = np.maximum(kappa(z, cfg), KAPPA_FLOOR)
    if inverse == "approx":
        z_new = h_inv_approx(k)
    elif inverse == "exact":
        z_new = np.array([h_inv_exact(float(v)) for v in k])
    else:
        raise ValueError(f"unknown inverse {inverse!r}")
    z_new = z_new - np.min(z_new)
    return CategoricalLogits(z=z_new)
