import numpy as np
import pytest

from era_kit.classifier import ClassifierConfig, train_classifier
from era_kit.envs import ToyEnv, env_step
from era_kit.era_discrete import EraDiscreteConfig
from era_kit.era_llm import EraLlmConfig
from era_kit.grpo_toy import GrpoToyConfig, train_grpo_toy
from era_kit.sac import SacAgent, SacConfig, default_era_config, train_sac


def _strip_agent(out):
    out = dict(out)
    out.pop("agent")
    return out


class TestSac:
    def test_determinism(self):
        cfg = SacConfig(era=default_era_config(2), eval_every=600)
        a = _strip_agent(train_sac("pointmass", cfg, seed=3, total_steps=1300))
        b = _strip_agent(train_sac("pointmass", cfg, seed=3, total_steps=1300))
        assert a == b

    def test_era_variant_never_evaluates_log_prob(self):
        cfg = SacConfig(era=default_era_config(2), eval_every=1300)
        out = train_sac("pointmass", cfg, seed=0, total_steps=1300)
        assert out["log_prob_evals"] == 0

    def test_baseline_evaluates_log_prob(self):
        cfg = SacConfig(alpha=0.2, eval_every=1300)
        out = train_sac("pointmass", cfg, seed=0, total_steps=1300)
        assert out["log_prob_evals"] > 0

    def test_entropy_floor_at_every_logged_state(self):
        cfg = SacConfig(era=default_era_config(2), eval_every=600)
        out = train_sac("pointmass", cfg, seed=0, total_steps=1300)
        h0 = cfg.era.target_entropy
        assert out["min_logged_gaussian_entropy"] >= h0 - 1e-9

    def _fixed_policy_agents(self):
        rng = np.random.default_rng(0)
        era_agent = SacAgent(4, 2, SacConfig(era=default_era_config(2)), rng)
        base_agent = SacAgent(4, 2, SacConfig(alpha=0.0), np.random.default_rng(1))
        # Identical target critics and identical policy outputs isolate the
        # target formulas themselves.
        for src, dst in ((era_agent.q1_target, base_agent.q1_target),
                         (era_agent.q2_target, base_agent.q2_target)):
            for ps, pd in zip(src.parameters(), dst.parameters()):
                pd.data = ps.data.copy()
        mu = np.tile(np.array([0.2, -0.3]), (8, 1))
        sigma = np.tile(np.array([0.4, 0.2]), (8, 1))
        stub = lambda obs: (np.tile(mu[0], (np.atleast_2d(obs).shape[0], 1)),
                            np.tile(sigma[0], (np.atleast_2d(obs).shape[0], 1)))
        era_agent.policy_params_np = stub
        base_agent.policy_params_np = stub
        return era_agent, base_agent

    def test_alpha_zero_baseline_targets_equal_era_targets(self):
        era_agent, base_agent = self._fixed_policy_agents()
        rng = np.random.default_rng(5)
        rewards = rng.standard_normal(8)
        dones = np.zeros(8)
        next_states = rng.standard_normal((8, 4))
        y_era = era_agent.compute_targets(rewards, dones, next_states, np.random.default_rng(7))
        y_base = base_agent.compute_targets(rewards, dones, next_states, np.random.default_rng(7))
        np.testing.assert_array_equal(y_era, y_base)

    def test_nonzero_alpha_changes_targets(self):
        era_agent, base_agent = self._fixed_policy_agents()
        base_agent.cfg.alpha = 0.2
        rng = np.random.default_rng(5)
        rewards = rng.standard_normal(8)
        dones = np.zeros(8)
        next_states = rng.standard_normal((8, 4))
        y_era = era_agent.compute_targets(rewards, dones, next_states, np.random.default_rng(7))
        y_base = base_agent.compute_targets(rewards, dones, next_states, np.random.default_rng(7))
        assert np.all(y_era != y_base)

    def test_done_transitions_ignore_bootstrap(self):
        era_agent, _ = self._fixed_policy_agents()
        rewards = np.array([1.5, -0.5])
        dones = np.ones(2)
        next_states = np.zeros((2, 4))
        y = era_agent.compute_targets(rewards, dones, next_states, np.random.default_rng(0))
        np.testing.assert_array_equal(y, rewards)

    def test_critic_loss_decreases_on_fixed_batch(self):
        from era_kit.autodiff import Tensor

        rng = np.random.default_rng(2)
        agent = SacAgent(4, 2, SacConfig(era=default_era_config(2)), rng)
        sa = rng.standard_normal((64, 6))
        y = rng.standard_normal(64)

        def loss_value():
            q1 = agent.q1(Tensor(sa))[:, 0]
            q2 = agent.q2(Tensor(sa))[:, 0]
            return ((q1 - y) ** 2.0).mean() + ((q2 - y) ** 2.0).mean()

        first = float(loss_value().data)
        for _ in range(100):
            loss = loss_value()
            agent.critic_opt.zero_grad()
            loss.backward()
            agent.critic_opt.step()
        assert float(loss_value().data) < first

    def test_update_requires_filled_buffer(self):
        from era_kit.replay import ReplayBuffer

        rng = np.random.default_rng(0)
        agent = SacAgent(4, 2, SacConfig(), rng)
        buf = ReplayBuffer(256, 4, 2)
        with pytest.raises(ValueError):
            agent.update(buf, rng)

    def test_baseline_alpha_zero_sigma_collapses(self):
        cfg = SacConfig(alpha=0.0, eval_every=3000)
        out = train_sac("pointmass", cfg, seed=0, total_steps=3000)
        agent = out["agent"]
        env = ToyEnv("pointmass")
        rng = np.random.default_rng(5)
        collapsed = total = 0
        for _ in range(5):
            obs = env.reset(rng)
            done = False
            while not done:
                mu, sigma = agent.policy_params_np(obs[None, :])
                total += 1
                collapsed += bool(np.all(sigma[0] <= cfg.sigma_min * 1.5))
                obs, _, done = env_step(env, np.clip(mu[0], -1.0, 1.0))
        assert collapsed / total >= 0.9


class TestClassifier:
    def test_entropy_floor_every_epoch(self):
        era = EraDiscreteConfig(target_entropy=0.6, classes=10)
        out = train_classifier(ClassifierConfig(epochs=4, era=era), seed=0)
        for row in out["rows"]:
            assert row["mean_predictive_entropy"] >= 0.6 - 0.05

    def test_h0_zero_matches_plain_baseline(self):
        # exp(0 - 1) barely clears log(tau)/tau, so the head is near-identity.
        era = EraDiscreteConfig(target_entropy=0.0, classes=10)
        plain = train_classifier(ClassifierConfig(epochs=4), seed=0)
        with_era = train_classifier(ClassifierConfig(epochs=4, era=era), seed=0)
        acc_plain = plain["rows"][-1]["test_accuracy"]
        acc_era = with_era["rows"][-1]["test_accuracy"]
        assert abs(acc_plain - acc_era) <= 0.01

    def test_uniform_entropy_target_pins_accuracy_at_chance(self):
        era = EraDiscreteConfig(target_entropy=np.log(10.0), classes=10, tau=np.e)
        out = train_classifier(ClassifierConfig(epochs=2, era=era), seed=0)
        assert out["rows"][-1]["test_accuracy"] == pytest.approx(0.10, abs=0.02)
        assert out["rows"][-1]["mean_predictive_entropy"] == pytest.approx(np.log(10.0), abs=1e-6)


class TestGrpoToy:
    def test_degenerate_window_bit_identical_to_vanilla(self):
        era = EraLlmConfig(omega_low=0.0, omega_high=np.inf)
        a = train_grpo_toy(GrpoToyConfig(era=era), seed=0, steps=40)
        b = train_grpo_toy(GrpoToyConfig(era=None), seed=0, steps=40)
        np.testing.assert_array_equal(a["final_weights"], b["final_weights"])
        for ra, rb in zip(a["rows"], b["rows"]):
            assert {k: v for k, v in ra.items() if k != "step"} == \
                   {k: v for k, v in rb.items() if k != "step"}

    def test_determinism(self):
        a = train_grpo_toy(GrpoToyConfig(), seed=4, steps=30)
        b = train_grpo_toy(GrpoToyConfig(), seed=4, steps=30)
        np.testing.assert_array_equal(a["final_weights"], b["final_weights"])
        assert a["rows"] == b["rows"]

    def test_branch_fractions_logged(self):
        era = EraLlmConfig(omega_low=5.0, k=2.0)  # entropy < log(16) < 5: always sharpen
        out = train_grpo_toy(GrpoToyConfig(era=era), seed=0, steps=10)
        for row in out["rows"]:
            assert row["sharpen_frac"] == 1.0
            assert row["flatten_frac"] == 0.0

    def test_flatten_fraction_decays(self):
        # Flattening engages while entropy sits above the window and dies off
        # as training sharpens the policy.
        era = EraLlmConfig(omega_low=0.1, omega_high=2.0, k=2.0)
        out = train_grpo_toy(
            GrpoToyConfig(era=era, optimizer="adam", lr=0.02), seed=0, steps=300
        )
        first = np.mean([r["flatten_frac"] for r in out["rows"][:30]])
        last = np.mean([r["flatten_frac"] for r in out["rows"][-30:]])
        assert first > 0.5
        assert last <= 0.1
