import math

import numpy as np
import pytest

from era_kit import autodiff as ad
from era_kit.autodiff import (
    Adam,
    Mlp,
    Tensor,
    finite_difference_grad,
    load_checkpoint,
    save_checkpoint,
)
from era_kit.era_continuous import EraContinuousConfig
from era_kit.era_discrete import EraDiscreteConfig
from era_kit.era_llm import EraLlmConfig, ResponseBatch, era_objective
from era_kit.heads import era_log_sigma, era_logits_t, truncated_log_prob_t


def _check_grad(build, x0, atol=0.0, rtol=1e-4, h=1e-5):
    """Tape gradient of scalar build(Tensor) vs central differences."""
    xt = Tensor(x0.copy(), requires_grad=True)
    out = build(xt)
    out.backward()
    fd = finite_difference_grad(lambda x: float(build(Tensor(x)).data), x0.copy(), h=h)
    denom = np.abs(fd) + 1e-6
    rel = np.abs(xt.grad - fd) / denom
    assert rel.max() <= rtol, f"max rel err {rel.max():.3g}"


RNG = np.random.default_rng(0)
X = RNG.standard_normal((3, 4)) * 0.8


class TestElementwiseOps:
    def test_exp(self):
        _check_grad(lambda t: ad.exp(t).sum(), X)

    def test_log(self):
        _check_grad(lambda t: ad.log(t).sum(), np.abs(X) + 0.5)

    def test_sqrt(self):
        _check_grad(lambda t: ad.sqrt(t).sum(), np.abs(X) + 0.5)

    def test_tanh(self):
        _check_grad(lambda t: ad.tanh(t).sum(), X)

    def test_relu(self):
        x = X.copy()
        x[np.abs(x) < 0.05] += 0.1  # keep away from the kink
        _check_grad(lambda t: ad.relu(t).sum(), x)

    def test_normal_cdf(self):
        _check_grad(lambda t: ad.normal_cdf_t(t).sum(), X)

    def test_normal_icdf(self):
        u = 0.1 + 0.8 * (X - X.min()) / (X.max() - X.min())
        _check_grad(lambda t: ad.normal_icdf_t(t).sum(), u, h=1e-6)

    def test_maximum_minimum(self):
        x = X.copy()
        x[np.abs(x - 0.2) < 0.05] += 0.2
        _check_grad(lambda t: ad.maximum(t, 0.2).sum(), x)
        _check_grad(lambda t: ad.minimum(t, 0.2).sum(), x)

    def test_clip(self):
        x = X.copy()
        x[np.abs(np.abs(x) - 0.5) < 0.05] *= 1.3
        _check_grad(lambda t: ad.clip(t, -0.5, 0.5).sum(), x)

    def test_straight_through_clip_passes_gradient(self):
        xt = Tensor(np.array([-2.0, 0.3, 2.0]), requires_grad=True)
        ad.straight_through_clip(xt, -1.0, 1.0).sum().backward()
        np.testing.assert_array_equal(xt.grad, np.ones(3))

    def test_detach_blocks_gradient(self):
        xt = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        (ad.detach(xt) * xt).sum().backward()
        np.testing.assert_allclose(xt.grad, xt.data)  # only the live branch


class TestArithmetic:
    def test_add_sub_mul_div_pow_neg(self):
        y = RNG.standard_normal((3, 4)) + 3.0
        _check_grad(lambda t: ((t + 2.0) * 3.0 - t / y + (-t)).sum(), X)
        _check_grad(lambda t: (t ** 2.0).sum(), X)

    def test_broadcast_add(self):
        row = RNG.standard_normal(4)
        _check_grad(lambda t: (t + row).sum(), X)
        _check_grad(lambda t: (Tensor(X) + t).sum(), row)

    def test_matmul(self):
        w = RNG.standard_normal((4, 2))
        _check_grad(lambda t: (t @ w).sum(), X)
        _check_grad(lambda t: (Tensor(X) @ t).sum(), w)

    def test_getitem(self):
        _check_grad(lambda t: (t[1:, :2] * 2.0).sum(), X)

    def test_sum_axis_and_mean(self):
        _check_grad(lambda t: t.sum(axis=0).sum(), X)
        _check_grad(lambda t: (t.mean(axis=1) ** 2.0).sum(), X)


class TestStructuredOps:
    def test_concat(self):
        y = RNG.standard_normal((3, 2))
        _check_grad(lambda t: (ad.concat([t, Tensor(y)], axis=1) ** 2.0).sum(), X)

    def test_softmax(self):
        coeff = RNG.standard_normal((3, 4))
        _check_grad(lambda t: (ad.softmax(t) * coeff).sum(), X)

    def test_log_softmax(self):
        coeff = RNG.standard_normal((3, 4))
        _check_grad(lambda t: (ad.log_softmax(t) * coeff).sum(), X)

    def test_log_sum_exp(self):
        _check_grad(lambda t: ad.log_sum_exp(t).sum(), X)

    def test_gather_last(self):
        idx = np.array([0, 3, 1])
        _check_grad(lambda t: ad.gather_last(t, idx).sum(), X)

    def test_linear(self):
        w = RNG.standard_normal((4, 5)) * 0.5
        b = RNG.standard_normal(5) * 0.1
        _check_grad(lambda t: (ad.linear(t, Tensor(w), Tensor(b)) ** 2.0).sum(), X)
        _check_grad(lambda t: (ad.linear(Tensor(X), t, Tensor(b)) ** 2.0).sum(), w)
        _check_grad(lambda t: (ad.linear(Tensor(X), Tensor(w), t) ** 2.0).sum(), b)

    def test_layer_norm(self):
        coeff = RNG.standard_normal((3, 4))
        _check_grad(lambda t: (ad.layer_norm(t) * coeff).sum(), X)


class TestCompositions:
    """Full network-to-loss paths checked against finite differences."""

    def test_continuous_log_prob_path(self):
        rng = np.random.default_rng(5)
        net = Mlp([3, 8, 4], rng, "relu")
        obs = rng.standard_normal((2, 3))
        actions = rng.uniform(-0.9, 0.9, (2, 2))
        cfg = EraContinuousConfig(target_entropy=-1.0, sigma_min=1e-3, sigma_max=1.0, dim=2)

        def loss_from_w0(w0):
            net.weights[0].data = w0
            out = net(Tensor(obs))
            mu = ad.tanh(out[:, :2])
            sigma = ad.exp(era_log_sigma(out[:, 2:], cfg))
            return truncated_log_prob_t(mu, sigma, actions).sum()

        w0 = net.weights[0].data.copy()
        net.weights[0].requires_grad = True
        loss = loss_from_w0(w0.copy())
        loss.backward()
        grad = net.weights[0].grad.copy()
        net.weights[0].grad = None
        fd = finite_difference_grad(lambda w: float(loss_from_w0(w).data), w0.copy())
        rel = np.abs(grad - fd) / (np.abs(fd) + 1e-6)
        assert rel.max() <= 1e-4

    def test_discrete_cross_entropy_path(self):
        rng = np.random.default_rng(6)
        net = Mlp([4, 8, 5], rng, "relu")
        x = rng.standard_normal((3, 4))
        labels = np.array([0, 2, 4])
        cfg = EraDiscreteConfig(target_entropy=1.2, classes=5)

        def loss_from_w0(w0):
            net.weights[0].data = w0
            z = era_logits_t(net(Tensor(x)), cfg)
            return -ad.gather_last(ad.log_softmax(z), labels).mean()

        w0 = net.weights[0].data.copy()
        net.weights[0].requires_grad = True
        loss = loss_from_w0(w0.copy())
        loss.backward()
        grad = net.weights[0].grad.copy()
        net.weights[0].grad = None
        fd = finite_difference_grad(lambda w: float(loss_from_w0(w).data), w0.copy())
        rel = np.abs(grad - fd) / (np.abs(fd) + 1e-6)
        assert rel.max() <= 1e-4

    def test_llm_objective_path(self):
        rng = np.random.default_rng(7)
        logits = rng.standard_normal((2, 4, 6)) * 1.5
        batch = ResponseBatch(
            logits=logits,
            sampled_tokens=rng.integers(0, 6, (2, 4)),
            advantages=rng.standard_normal((2, 4)),
            mask=np.ones((2, 4), dtype=bool),
        )
        cfg = EraLlmConfig(omega_low=1.0, omega_high=2.0, k=2.0)

        def f(z):
            b = ResponseBatch(logits=z, sampled_tokens=batch.sampled_tokens,
                              advantages=batch.advantages, mask=batch.mask)
            return float(era_objective(b, cfg).data)

        zt = Tensor(logits.copy(), requires_grad=True)
        era_objective(batch, cfg, logits_t=zt).backward()
        fd = finite_difference_grad(f, logits.copy())
        rel = np.abs(zt.grad - fd) / (np.abs(fd) + 1e-6)
        assert rel.max() <= 1e-4


class TestGraphSemantics:
    def test_double_backward_rejected(self):
        xt = Tensor(np.ones(3), requires_grad=True)
        y = (xt * 2.0).sum()
        y.backward()
        with pytest.raises(RuntimeError):
            y.backward()

    def test_leaves_reusable_across_graphs(self):
        xt = Tensor(np.ones(3), requires_grad=True)
        (xt * 2.0).sum().backward()
        first = xt.grad.copy()
        xt.grad = None
        (xt * 3.0).sum().backward()
        np.testing.assert_allclose(xt.grad, first * 1.5)

    def test_backward_needs_scalar(self):
        xt = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            (xt * 2.0).backward()


class TestMlpAndAdam:
    def test_forward_np_matches_tape(self):
        rng = np.random.default_rng(8)
        for activation in ("relu", "tanh"):
            net = Mlp([3, 6, 2], rng, activation)
            x = rng.standard_normal((4, 3))
            np.testing.assert_allclose(net.forward_np(x), net(Tensor(x)).data, atol=1e-12)

    def test_adam_descends_quadratic(self):
        t = Tensor(np.array([5.0, -3.0]), requires_grad=True)
        opt = Adam([t], lr=0.1)
        for _ in range(300):
            t.grad = None
            (t * t).sum().backward()
            opt.step()
        assert np.all(np.abs(t.data) < 0.05)

    def test_checkpoint_roundtrip(self, tmp_path):
        rng = np.random.default_rng(9)
        net = Mlp([3, 6, 2], rng)
        path = str(tmp_path / "net.ckpt")
        save_checkpoint(path, net.state_arrays("net"))
        arrays = load_checkpoint(path)
        net2 = Mlp([3, 6, 2], np.random.default_rng(10))
        net2.load_state_arrays("net", arrays)
        x = rng.standard_normal((2, 3))
        np.testing.assert_array_equal(net.forward_np(x), net2.forward_np(x))

    def test_checkpoint_magic_rejected(self, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"not a checkpoint\nEND\n")
        with pytest.raises(ValueError):
            load_checkpoint(str(bad))
