"""Soft actor-critic on the toy environments, in two variants: the classic
baseline with a fixed entropy temperature, and the activation-constrained
variant whose policy head guarantees the entropy floor architecturally and
whose targets and actor objective carry no log-probability term at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Mlp, Tensor
from .envs import ENV_SPECS, ToyEnv, env_step
from .era_continuous import EraContinuousConfig
from .heads import (
    bounded_log_sigma,
    era_log_sigma,
    truncated_log_prob_np,
    truncated_log_prob_t,
    truncated_rsample,
    truncated_sample_np,
)
from .numerics import LOG_SQRT_2PI_E
from .replay import ReplayBuffer, Transition


@dataclass
class SacConfig:
    gamma: float = 0.99
    polyak: float = 0.005
    alpha: float = 0.2  # fixed temperature, baseline variant only
    batch_size: int = 128
    grad_steps_per_env_step: int = 2
    warmup_steps: int = 1000
    hidden: int = 64
    lr: float = 2e-3
    max_grad_norm: float | None = 1.0  # global-norm gradient clip
    buffer_capacity: int = 5_000
    sigma_min: float = 1e-3
    sigma_max: float = 1.0
    use_layer_norm: bool = True
    eval_every: int = 1000
    eval_episodes: int = 10
    era: EraContinuousConfig | None = None  # set for the "era" variant

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if not 0.0 < self.polyak < 1.0:
            raise ValueError("polyak must be in (0, 1)")
        if self.batch_size < 1 or self.grad_steps_per_env_step < 1:
            raise ValueError("batch size and gradient steps must be positive")


def default_era_config(act_dim: int, sigma_min=1e-3, sigma_max=1.0,
                       target_entropy: float | None = None) -> EraContinuousConfig:
    """Target entropy defaults to -dim(A)/2."""
    if target_entropy is None:
        target_entropy = -act_dim / 2.0
    return EraContinuousConfig(
        target_entropy=target_entropy, sigma_min=sigma_min, sigma_max=sigma_max, dim=act_dim
    )


def _clip_grad_norm(params, max_norm: float | None):
    if max_norm is None:
        return
    total = math.sqrt(sum(float(np.sum(p.grad ** 2)) for p in params
                          if p.grad is not None))
    if total > max_norm:
        scale = max_norm / total
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale


def _tensor_min(a: Tensor, b: Tensor) -> Tensor:
    mask = (a.data <= b.data).astype(np.float64)
    return a * mask + b * (1.0 - mask)


class SacAgent:
    """Actor, twin critics, and their Polyak-averaged targets."""

    def __init__(self, obs_dim: int, act_dim: int, cfg: SacConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.variant = "era" if cfg.era is not None else "baseline"
        if cfg.era is not None and cfg.era.dim != act_dim:
            raise ValueError("era config dim must match action dim")
        h = cfg.hidden
        ln = cfg.use_layer_norm
        self.actor = Mlp([obs_dim, h, h, 2 * act_dim], rng, "relu", ln)
        self.q1 = Mlp([obs_dim + act_dim, h, h, 1], rng, "relu", ln)
        self.q2 = Mlp([obs_dim + act_dim, h, h, 1], rng, "relu", ln)
        self.q1_target = Mlp([obs_dim + act_dim, h, h, 1], rng, "relu", ln)
        self.q2_target = Mlp([obs_dim + act_dim, h, h, 1], rng, "relu", ln)
        self._copy_targets()
        self.actor_opt = Adam(self.actor.parameters(), lr=cfg.lr)
        self.critic_opt = Adam(self.q1.parameters() + self.q2.parameters(), lr=cfg.lr)
        self.delta_hat = 0.0
        # Structural counter: the era variant must never evaluate a log-prob
        # in its targets or actor objective.
        self.log_prob_evals = 0

    def _copy_targets(self):
        for src, dst in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            for ps, pd in zip(src.parameters(), dst.parameters()):
                pd.data = ps.data.copy()

    # ---- policy ----------------------------------------------------------

    def _effective_delta(self) -> float:
        era = self.cfg.era
        if era is None:
            return 0.0
        return era.delta_const if era.delta_mode == "constant" else self.delta_hat

    def policy_params_np(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        out = self.actor.forward_np(np.atleast_2d(obs))
        # tanh keeps the mean inside the action box; an unbounded mean drives
        # the truncation mass to zero and destabilizes the sampler's gradients.
        mu, pre = np.tanh(out[:, : self.act_dim]), out[:, self.act_dim:]
        if self.variant == "era":
            era = self.cfg.era
            log_max, log_min = math.log(era.sigma_max), math.log(era.sigma_min)
            w = np.exp(pre - pre.max(axis=1, keepdims=True))
            w /= w.sum(axis=1, keepdims=True)
            slope = (era.target_entropy + self._effective_delta()
                     - era.dim * LOG_SQRT_2PI_E - era.dim * log_max)
            log_sigma = np.clip(log_max + slope * w, log_min, log_max)
        else:
            log_min, log_max = math.log(self.cfg.sigma_min), math.log(self.cfg.sigma_max)
            log_sigma = log_min + (log_max - log_min) * 0.5 * (1.0 + np.tanh(pre))
        return mu, np.exp(log_sigma)

    def _policy_params_t(self, obs: np.ndarray) -> tuple[Tensor, Tensor]:
        out = self.actor(Tensor(np.atleast_2d(obs)))
        mu = ad.tanh(out[:, : self.act_dim])
        pre = out[:, self.act_dim:]
        if self.variant == "era":
            log_sigma = era_log_sigma(pre, self.cfg.era, self._effective_delta())
        else:
            log_sigma = bounded_log_sigma(pre, self.cfg.sigma_min, self.cfg.sigma_max)
        return mu, ad.exp(log_sigma)

    def act(self, obs: np.ndarray, rng: np.random.Generator, deterministic=False) -> np.ndarray:
        mu, sigma = self.policy_params_np(obs)
        if deterministic:
            return np.clip(mu[0], -1.0, 1.0)
        u = rng.uniform(size=mu.shape)
        return truncated_sample_np(mu, sigma, u)[0]

    def gaussian_entropies(self, obs: np.ndarray) -> np.ndarray:
        mu, sigma = self.policy_params_np(obs)
        return np.sum(LOG_SQRT_2PI_E + np.log(sigma), axis=1)

    # ---- updates ---------------------------------------------------------

    def compute_targets(self, rewards, dones, next_states, rng: np.random.Generator) -> np.ndarray:
        mu, sigma = self.policy_params_np(next_states)
        u = rng.uniform(size=mu.shape)
        a_next = truncated_sample_np(mu, sigma, u)
        sa = np.concatenate([next_states, a_next], axis=1)
        q_min = np.minimum(self.q1_target.forward_np(sa)[:, 0],
                           self.q2_target.forward_np(sa)[:, 0])
        if self.variant == "baseline" and self.cfg.alpha != 0.0:
            self.log_prob_evals += 1
            q_min = q_min - self.cfg.alpha * truncated_log_prob_np(mu, sigma, a_next)
        return rewards + self.cfg.gamma * (1.0 - dones) * q_min

    def update(self, buffer: ReplayBuffer, rng: np.random.Generator) -> dict:
        cfg = self.cfg
        if buffer.size < cfg.batch_size:
            raise ValueError("buffer smaller than batch size")
        states, actions, rewards, next_states, dones = buffer.sample(cfg.batch_size, rng)

        y = self.compute_targets(rewards, dones, next_states, rng)

        # Critic step: MSE to the detached targets on both critics.
        sa = np.concatenate([states, actions], axis=1)
        q1 = self.q1(Tensor(sa))[:, 0]
        q2 = self.q2(Tensor(sa))[:, 0]
        critic_loss = ((q1 - y) ** 2.0).mean() + ((q2 - y) ** 2.0).mean()
        self.critic_opt.zero_grad()
        critic_loss.backward()
        _clip_grad_norm(self.critic_opt.params, cfg.max_grad_norm)
        self.critic_opt.step()

        # Actor step: ascend the min-critic value of a reparameterized sample.
        mu, sigma = self._policy_params_t(states)
        u = rng.uniform(size=(cfg.batch_size, self.act_dim))
        a_new = truncated_rsample(mu, sigma, u)
        sa_new = ad.concat([Tensor(states), a_new], axis=1)
        q_min = _tensor_min(self.q1(sa_new)[:, 0], self.q2(sa_new)[:, 0])
        if self.variant == "baseline" and cfg.alpha != 0.0:
            self.log_prob_evals += 1
            log_pi = truncated_log_prob_t(mu, sigma, a_new)
            actor_loss = (log_pi * cfg.alpha - q_min).mean()
        else:
            actor_loss = -q_min.mean()
        self.actor_opt.zero_grad()
        actor_loss.backward()
        _clip_grad_norm(self.actor_opt.params, cfg.max_grad_norm)
        self.actor_opt.step()

        # Learned residual: projected dual ascent on the entropy deficit.
        era = cfg.era
        if era is not None and era.delta_mode == "learned":
            from .era_continuous import entropy_for_residual
            from .distributions import GaussianPolicyParams

            mu_np, sigma_np = self.policy_params_np(states)
            ents = [
                entropy_for_residual(
                    GaussianPolicyParams(mu_np[i], sigma_np[i], era.sigma_min, era.sigma_max),
                    era, rng,
                )
                for i in range(min(32, cfg.batch_size))
            ]
            grad = float(np.mean(ents)) - era.target_entropy
            self.delta_hat = max(0.0, self.delta_hat - era.delta_lr * grad)

        # Polyak averaging into the targets.
        tau = cfg.polyak
        for src, dst in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            for ps, pd in zip(src.parameters(), dst.parameters()):
                pd.data = tau * ps.data + (1.0 - tau) * pd.data

        entropy = float(np.mean(np.sum(LOG_SQRT_2PI_E + np.log(sigma.data), axis=1)))
        return {
            "critic_loss": float(critic_loss.data),
            "actor_loss": float(actor_loss.data),
            "policy_entropy": entropy,
            "delta_hat": self.delta_hat,
        }


def evaluate(agent: SacAgent, env_kind: str, rng: np.random.Generator, episodes: int) -> float:
    total = 0.0
    for _ in range(episodes):
        env = ToyEnv(env_kind)
        obs = env.reset(rng)
        done = False
        while not done:
            action = agent.act(obs, rng, deterministic=True)
            obs, r, done = env_step(env, action)
            total += r
    return total / episodes


def train_sac(env_kind: str, cfg: SacConfig, seed: int, total_steps: int) -> dict:
    """Run one seeded training session; returns a run record with per-eval
    metrics and the trained agent."""
    spec = ENV_SPECS[env_kind]
    rng = np.random.default_rng(seed)
    eval_rng_seed = int(np.random.default_rng([seed, 7]).integers(2 ** 31))
    agent = SacAgent(spec["obs_dim"], spec["act_dim"], cfg, rng)
    buffer = ReplayBuffer(cfg.buffer_capacity, spec["obs_dim"], spec["act_dim"])

    env = ToyEnv(env_kind)
    obs = env.reset(rng)
    rows: list[dict] = []
    min_logged_entropy = math.inf
    metrics: dict = {}
    for step in range(1, total_steps + 1):
        if step <= cfg.warmup_steps:
            action = rng.uniform(-1.0, 1.0, size=spec["act_dim"])
        else:
            mu, sigma = agent.policy_params_np(obs)
            entropy = float(np.sum(LOG_SQRT_2PI_E + np.log(sigma)))
            min_logged_entropy = min(min_logged_entropy, entropy)
            u = rng.uniform(size=mu.shape)
            action = truncated_sample_np(mu, sigma, u)[0]
        next_obs, reward, done = env_step(env, action)
        buffer.add(Transition(obs, action, reward, next_obs, done))
        obs = env.reset(rng) if done else next_obs

        if step > cfg.warmup_steps:
            for _ in range(cfg.grad_steps_per_env_step):
                metrics = agent.update(buffer, rng)

        if step % cfg.eval_every == 0:
            eval_rng = np.random.default_rng(eval_rng_seed)
            ret = evaluate(agent, env_kind, eval_rng, cfg.eval_episodes)
            row = {"step": step, "return": ret}
            row.update(metrics)
            rows.append(row)

    return {
        "env": env_kind,
        "seed": seed,
        "variant": agent.variant,
        "rows": rows,
        "min_logged_gaussian_entropy": min_logged_entropy,
        "log_prob_evals": agent.log_prob_evals,
        "agent": agent,
    }
