"""Post-sampling entropy regularization for token policies.

Responses are sampled from the untouched softmax policy; only the update path
sees transformed logits.  Per response, a single branch applies, chosen from
the top-20%-token entropy statistic H_resp: sharpen (z * k) when entropy is
too low, flatten (z / k) when too high, identity otherwise.  Tokens with
nonpositive advantage are never transformed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

BRANCH_SHARPEN = "sharpen"
BRANCH_IDENTITY = "identity"
BRANCH_FLATTEN = "flatten"


@dataclass(frozen=True)
class EraLlmConfig:
    """Entropy window [omega_low, omega_high], logit scale k > 1, top-token
    fraction for H_resp, and the optional top-k logit filter."""

    omega_low: float
    omega_high: float = math.inf
    k: float = 2.0
    top_frac: float = 0.2
    top_k_logits: int | None = None
    scale_advantages_enabled: bool = True

    def __post_init__(self):
        if not self.omega_low < self.omega_high:
            raise ValueError("need omega_low < omega_high")
        if self.k <= 1.0:
            raise ValueError("k must be > 1")
        if not 0.0 < self.top_frac <= 1.0:
            raise ValueError("top_frac must be in (0, 1]")
        if self.top_k_logits is not None and self.top_k_logits < 1:
            raise ValueError("top_k_logits must be positive")


@dataclass
class ResponseBatch:
    """Token logits, sampled tokens, per-token advantages and validity mask."""

    logits: np.ndarray  # [batch, time, vocab]
    sampled_tokens: np.ndarray  # [batch, time] int
    advantages: np.ndarray  # [batch, time]
    mask: np.ndarray  # [batch, time] bool

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        self.sampled_tokens = np.asarray(self.sampled_tokens, dtype=np.int64)
        self.advantages = np.asarray(self.advantages, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        b, t, v = self.logits.shape
        if self.sampled_tokens.shape != (b, t) or self.advantages.shape != (b, t) \
                or self.mask.shape != (b, t):
            raise ValueError("batch field shapes disagree")
        if np.any(self.sampled_tokens < 0) or np.any(self.sampled_tokens >= v):
            raise ValueError("sampled token id outside vocabulary")


@dataclass(frozen=True)
class GroupRewards:
    """Rewards of the K sampled responses to one prompt."""

    rewards: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=np.float64))
        if self.rewards.size < 2:
            raise ValueError("group advantage needs K >= 2 rewards")


def grpo_advantages(group: GroupRewards, eps: float = 1e-8) -> np.ndarray:
    """Group-standardized rewards: (r - mean) / (population std + eps).

    Degenerate groups (std < 1e-8) get all-zero advantages.
    """
    r = group.rewards
    std = float(np.std(r))
    if std < 1e-8:
        return np.zeros_like(r)
    return (r - np.mean(r)) / (std + eps)


def token_entropies(logits: np.ndarray) -> np.ndarray:
    """Per-token softmax entropy over the last axis."""
    m = logits.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(logits - m).sum(axis=-1, keepdims=True))
    log_p = logits - lse
    return -np.sum(np.exp(log_p) * log_p, axis=-1)


def h_resp(entropies: np.ndarray, mask: np.ndarray, top_frac: float = 0.2) -> float:
    """Mean of the m largest unmasked token entropies, m = max(1, floor(frac*L)).

    Ties are broken by earlier position (stable selection).
    """
    entropies = np.asarray(entropies, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    vals = entropies[mask]
    if vals.size == 0:
        raise ValueError("h_resp needs at least one unmasked token")
    m = max(1, int(math.floor(top_frac * vals.size)))
    order = np.argsort(-vals, kind="stable")
    return float(np.mean(vals[order[:m]]))


def select_branch(h: float, cfg: EraLlmConfig) -> str:
    if h < cfg.omega_low:
        return BRANCH_SHARPEN
    if h > cfg.omega_high:
        return BRANCH_FLATTEN
    return BRANCH_IDENTITY


def era_transform(logits: np.ndarray, h: float, advantage: float, cfg: EraLlmConfig) -> np.ndarray:
    """Eq.-13 logit rescaling for one token.  Nonpositive advantage, or the
    in-window branch, leaves the logits untouched."""
    logits = np.asarray(logits, dtype=np.float64)
    if advantage <= 0.0:
        return logits
    branch = select_branch(h, cfg)
    if branch == BRANCH_SHARPEN:
        return logits * cfg.k
    if branch == BRANCH_FLATTEN:
        return logits / cfg.k
    return logits


def scale_advantages(advantage: float, h: float, cfg: EraLlmConfig) -> float:
    """Matching advantage rescaling: A/k on the sharpening branch, k*A on the
    flattening branch, identity otherwise and for nonpositive advantages."""
    if advantage <= 0.0 or not cfg.scale_advantages_enabled:
        return advantage
    branch = select_branch(h, cfg)
    if branch == BRANCH_SHARPEN:
        return advantage / cfg.k
    if branch == BRANCH_FLATTEN:
        return advantage * cfg.k
    return advantage


def logit_factors(batch: ResponseBatch, cfg: EraLlmConfig) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Per-token logit multipliers, scaled advantages, and per-response branches.

    H_resp is computed from the sampling-time logits, before any transform.
    A factor of exactly 1.0 leaves logits bit-identical, which makes the
    degenerate config (omega_low=0, omega_high=inf) coincide with vanilla PG.
    """
    b, t, _ = batch.logits.shape
    ent = token_entropies(batch.logits)
    factors = np.ones((b, t))
    adv = batch.advantages.copy()
    branches: list[str] = []
    for i in range(b):
        h = h_resp(ent[i], batch.mask[i], cfg.top_frac)
        branch = select_branch(h, cfg)
        branches.append(branch)
        if branch == BRANCH_IDENTITY:
            continue
        pos = (batch.advantages[i] > 0.0) & batch.mask[i]
        if branch == BRANCH_SHARPEN:
            factors[i, pos] = cfg.k
            if cfg.scale_advantages_enabled:
                adv[i, pos] = adv[i, pos] / cfg.k
        else:
            factors[i, pos] = 1.0 / cfg.k
            if cfg.scale_advantages_enabled:
                adv[i, pos] = adv[i, pos] * cfg.k
    return factors, adv, branches


def era_objective(batch: ResponseBatch, cfg: EraLlmConfig, logits_t: Tensor | None = None) -> Tensor:
    """Differentiable Eq.-15 objective: mean over unmasked tokens of
    log pi'(a_t) * A'_t.

    Pass logits_t (a graph Tensor whose data equals batch.logits) to
    backpropagate into a policy network; otherwise a leaf tensor is created.
    Returned as an objective to maximize.
    """
    if logits_t is None:
        logits_t = Tensor(batch.logits, requires_grad=True)
    factors, adv, _ = logit_factors(batch, cfg)
    z = logits_t * factors[..., None]
    if cfg.top_k_logits is not None and cfg.top_k_logits < z.shape[-1]:
        # Keep the top-k logits (by transformed value); the rest are pushed to
        # an effective -inf inside log-softmax via a detached additive mask.
        kth = np.partition(z.data, -cfg.top_k_logits, axis=-1)[..., -cfg.top_k_logits][..., None]
        neg_mask = np.where(z.data >= kth, 0.0, -1e30)
        z = z + neg_mask
    log_p = ad.log_softmax(z)
    picked = ad.gather_last(log_p, batch.sampled_tokens)
    weighted = picked * (adv * batch.mask)
    total = weighted.sum()
    return total * (1.0 / max(1, int(batch.mask.sum())))


def decomposition_check(
    z: np.ndarray, advantages: np.ndarray, k: float, branch: str
) -> tuple[np.ndarray, np.ndarray]:
    """Executable form of the gradient identity: the autodiff gradient of
    E_{a~pi}[log pi'(a) A'_a] equals pi_a A_a - C (pi'_a - pi_a) with
    C = sum_{A_a>0} pi_a A_a.

    Requires advantages centered under pi (the identity's premise).
    """
    z = np.asarray(z, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    if branch not in (BRANCH_SHARPEN, BRANCH_IDENTITY, BRANCH_FLATTEN):
        raise ValueError(f"unknown branch {branch!r}")
    pi = np.exp(z - z.max())
    pi = pi / pi.sum()
    if abs(float(np.dot(pi, advantages))) > 1e-8:
        raise ValueError("advantages must satisfy sum_a pi_a A_a = 0")

    scale = {BRANCH_SHARPEN: k, BRANCH_IDENTITY: 1.0, BRANCH_FLATTEN: 1.0 / k}[branch]
    pos = advantages > 0.0

    zt = Tensor(z, requires_grad=True)
    log_p = ad.log_softmax(zt)
    log_p_scaled = ad.log_softmax(zt * scale)
    a_scaled = np.where(pos, advantages / scale, advantages)
    terms_pos = log_p_scaled * (pi * a_scaled * pos)
    terms_neg = log_p * (pi * advantages * (~pos))
    obj = terms_pos.sum() + terms_neg.sum()
    obj.backward()
    lhs = zt.grad.copy()

    pi_scaled = np.exp(scale * z - (scale * z).max())
    pi_scaled = pi_scaled / pi_scaled.sum()
    pi_prime = pi_scaled if branch != BRANCH_IDENTITY else pi
    c = float(np.sum(pi[pos] * advantages[pos]))
    rhs = pi * advantages - c * (pi_prime - pi)
    return lhs, rhs


@dataclass
class EntropyFloorSummary:
    minimum: float
    mean: float
    fraction_below_low: float
    fraction_above_high: float


def entropy_floor_stat(history: np.ndarray, cfg: EraLlmConfig) -> EntropyFloorSummary:
    """Summary of an H_resp trace: floor, mean, and the fractions outside the
    [omega_low, omega_high] window."""
    history = np.asarray(history, dtype=np.float64)
    if history.size == 0:
        raise ValueError("history must be nonempty")
    return EntropyFloorSummary(
        minimum=float(np.min(history)),
        mean=float(np.mean(history)),
        fraction_below_low=float(np.mean(history < cfg.omega_low)),
        fraction_above_high=float(np.mean(history > cfg.omega_high)),
    )
