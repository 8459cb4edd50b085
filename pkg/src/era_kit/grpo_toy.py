"""Group-relative policy gradient on a toy sequence task.

The task: emit a sequence of 12 tokens from a 16-token vocabulary; reward is
1 if the sequence matches any of a hidden set of target patterns (each pattern
pins a couple of positions), else 0.  The policy factorizes over positions, so
the per-position logits are shared across the K responses of a group.

With an entropy window configured, updates go through per-response logit
rescaling on the update path only (sampling always uses the raw policy).
Without one, the same code path runs with all factors fixed at 1.0, so a
window that never fires is arithmetically identical to no window at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Mlp, Tensor
from .era_llm import (
    EraLlmConfig,
    GroupRewards,
    ResponseBatch,
    grpo_advantages,
    h_resp,
    logit_factors,
    token_entropies,
)


@dataclass(frozen=True)
class GrpoToyConfig:
    vocab: int = 16
    seq_len: int = 12
    group_size: int = 8
    hidden: int = 32
    lr: float = 0.5
    optimizer: str = "sgd"
    n_patterns: int = 4
    constrained_positions: int = 2
    era: EraLlmConfig | None = None

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group size must be at least 2")
        if not 0 < self.constrained_positions <= self.seq_len:
            raise ValueError("constrained positions out of range")
        if self.n_patterns < 1:
            raise ValueError("need at least one pattern")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class ToySequenceTask:
    """Hidden pattern set: each pattern pins token targets at a few positions;
    a sequence scores 1 if it fully matches any pattern."""

    positions: list[np.ndarray]
    targets: list[np.ndarray]

    @classmethod
    def sample(cls, cfg: GrpoToyConfig, rng: np.random.Generator) -> "ToySequenceTask":
        positions, targets = [], []
        for _ in range(cfg.n_patterns):
            pos = np.sort(rng.choice(cfg.seq_len, size=cfg.constrained_positions, replace=False))
            positions.append(pos)
            targets.append(rng.integers(0, cfg.vocab, size=cfg.constrained_positions))
        return cls(positions=positions, targets=targets)

    def reward(self, tokens: np.ndarray) -> float:
        for pos, tgt in zip(self.positions, self.targets):
            if np.all(tokens[pos] == tgt):
                return 1.0
        return 0.0


class ToyPolicy:
    """Per-position categorical policy: a learned position embedding (the
    first weight matrix, indexed by one-hot positions) followed by a 2-layer
    MLP onto vocabulary logits."""

    def __init__(self, cfg: GrpoToyConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.net = Mlp([cfg.seq_len, cfg.hidden, cfg.hidden, cfg.vocab], rng, "tanh")
        # Plain SGD keeps the update proportional to the surrogate gradient,
        # so logit rescaling shows up in the step size, not just its direction;
        # Adam's normalization would largely cancel the magnitude effect.
        self.opt = Adam(self.net.parameters(), lr=cfg.lr) if cfg.optimizer == "adam" else None
        self._eye = np.eye(cfg.seq_len)

    def apply_gradients(self):
        if self.opt is not None:
            self.opt.step()
            return
        for p in self.net.parameters():
            if p.grad is not None:
                p.data = p.data - self.cfg.lr * p.grad

    def zero_grad(self):
        for p in self.net.parameters():
            p.grad = None

    def logits_t(self) -> Tensor:
        return self.net(Tensor(self._eye))  # [seq_len, vocab]

    def logits_np(self) -> np.ndarray:
        return self.net.forward_np(self._eye)

    def sample_tokens(self, rng: np.random.Generator) -> np.ndarray:
        z = self.logits_np()
        e = np.exp(z - z.max(axis=-1, keepdims=True))
        p = e / e.sum(axis=-1, keepdims=True)
        u = rng.uniform(size=self.cfg.seq_len)
        cum = np.cumsum(p, axis=-1)
        idx = [min(int(np.searchsorted(cum[t], u[t])), self.cfg.vocab - 1)
               for t in range(self.cfg.seq_len)]
        return np.array(idx)


def grpo_step(policy: ToyPolicy, task: ToySequenceTask, rng: np.random.Generator) -> dict:
    """One group: sample K responses, standardize rewards, ascend the
    (possibly rescaled) surrogate."""
    cfg = policy.cfg
    k = cfg.group_size
    tokens = np.stack([policy.sample_tokens(rng) for _ in range(k)])
    rewards = np.array([task.reward(tokens[i]) for i in range(k)])
    adv_resp = grpo_advantages(GroupRewards(rewards))

    z_np = policy.logits_np()
    batch = ResponseBatch(
        logits=np.broadcast_to(z_np, (k, cfg.seq_len, cfg.vocab)).copy(),
        sampled_tokens=tokens,
        advantages=np.broadcast_to(adv_resp[:, None], (k, cfg.seq_len)).copy(),
        mask=np.ones((k, cfg.seq_len), dtype=bool),
    )
    era = cfg.era if cfg.era is not None else EraLlmConfig(omega_low=0.0)
    factors, adv, branches = logit_factors(batch, era)

    # Degenerate groups (identical rewards) carry no signal; skipping the
    # optimizer step entirely keeps momentum from coasting through them.
    if np.any(adv != 0.0):
        z = policy.logits_t()
        total = None
        for i in range(k):
            zi = z * factors[i][:, None]
            log_p = ad.log_softmax(zi)
            picked = ad.gather_last(log_p, tokens[i])
            term = (picked * adv[i]).sum()
            total = term if total is None else total + term
        objective = total * (1.0 / (k * cfg.seq_len))
        loss = -objective
        policy.zero_grad()
        loss.backward()
        policy.apply_gradients()

    ent = token_entropies(batch.logits)
    h_vals = [h_resp(ent[i], batch.mask[i], era.top_frac) for i in range(k)]
    return {
        "reward_mean": float(np.mean(rewards)),
        "h_resp_mean": float(np.mean(h_vals)),
        "h_resp_min": float(np.min(h_vals)),
        "sharpen_frac": branches.count("sharpen") / k,
        "flatten_frac": branches.count("flatten") / k,
    }


def train_grpo_toy(cfg: GrpoToyConfig, seed: int, steps: int) -> dict:
    """Run one seeded session; returns per-step metrics and the final policy
    weights (for exact-equality comparisons between runs)."""
    rng = np.random.default_rng(seed)
    task = ToySequenceTask.sample(cfg, rng)
    policy = ToyPolicy(cfg, rng)
    rows = [dict(grpo_step(policy, task, rng), step=s) for s in range(1, steps + 1)]
    weights = np.concatenate([p.data.ravel() for p in policy.net.parameters()])
    return {
        "seed": seed,
        "variant": "era" if cfg.era is not None else "vanilla",
        "rows": rows,
        "final_weights": weights,
        "task_positions": [p.tolist() for p in task.positions],
    }


def train_toy_grpo(era_cfg: EraLlmConfig | None, seed: int, steps: int, **overrides) -> dict:
    """Convenience wrapper: default toy task with the given entropy window."""
    return train_grpo_toy(GrpoToyConfig(era=era_cfg, **overrides), seed, steps)
