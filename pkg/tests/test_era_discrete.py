import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from era_kit.distributions import categorical_entropy
from era_kit.era_discrete import (
    EraDiscreteConfig,
    era_logits,
    h_inv_approx,
    h_inv_exact,
    kappa,
    kappa_listing_form,
)

_INV_E = 1.0 / math.e


@st.composite
def feasible_cfgs(draw, classes=None):
    if classes is None:
        classes = draw(st.sampled_from([3, 10, 100]))
    tau = 4.0
    ub = math.log(tau) / tau
    lo = 1.0 + math.log(ub)
    hi = min(math.log(classes), 1.0 + math.log(classes * ub))
    h0 = draw(st.floats(lo, hi))
    return EraDiscreteConfig(target_entropy=h0, classes=classes, tau=tau)


class TestConfig:
    def test_tau_below_e_rejected(self):
        with pytest.raises(ValueError):
            EraDiscreteConfig(target_entropy=1.0, classes=10, tau=2.0)

    def test_target_above_log_d_rejected(self):
        with pytest.raises(ValueError):
            EraDiscreteConfig(target_entropy=math.log(10) + 0.1, classes=10)

    def test_c_h0_below_upper_bound_rejected(self):
        # exp(H0 - 1) must reach log(tau)/tau.
        with pytest.raises(ValueError):
            EraDiscreteConfig(target_entropy=-3.0, classes=10, tau=4.0)

    def test_uniform_limit_needs_small_tau(self):
        # H0 = log D pushes C_H0 above D log(tau)/tau at tau=4 for small D.
        with pytest.raises(ValueError):
            EraDiscreteConfig(target_entropy=math.log(3), classes=3, tau=4.0)
        EraDiscreteConfig(target_entropy=math.log(10), classes=10, tau=math.e)


class TestKappa:
    @given(feasible_cfgs(), st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=80, deadline=None)
    def test_range_and_sum_floor(self, cfg, seed):
        z = np.random.default_rng(seed).standard_normal(cfg.classes) * 3.0
        k = kappa(z, cfg)
        assert np.all(k >= 0.0)
        assert np.all(k <= cfg.upper_bound() + 1e-12)
        assert float(k.sum()) >= cfg.c_h0() - 1e-12

    @given(feasible_cfgs(), st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_listing_form_identical(self, cfg, seed):
        z = np.random.default_rng(seed).standard_normal(cfg.classes) * 3.0
        np.testing.assert_allclose(kappa(z, cfg), kappa_listing_form(z, cfg), atol=1e-14)

    def test_uniform_logits_split_budget_evenly(self):
        cfg = EraDiscreteConfig(target_entropy=1.5, classes=10)
        k = kappa(np.zeros(10), cfg)
        np.testing.assert_allclose(k, np.full(10, cfg.c_h0() / 10.0), atol=1e-14)


class TestHInverse:
    def test_endpoint_exact(self):
        assert h_inv_approx(_INV_E) == pytest.approx(-1.0, abs=1e-12)
        # h'(-1) = 0, so a 1e-12 residual pins y only to ~sqrt(2e * 1e-12).
        assert h_inv_exact(_INV_E) == pytest.approx(-1.0, abs=5e-6)

    @given(st.floats(1e-6, _INV_E))
    @settings(max_examples=200, deadline=None)
    def test_exact_inverse_satisfies_definition(self, x):
        y = h_inv_exact(x)
        assert y <= -1.0 + 1e-9
        assert -y * math.exp(y) == pytest.approx(x, abs=1e-12)

    def test_exact_matches_lambert_w_reference(self):
        # Frozen reference values from a 50-digit Lambert W_{-1} evaluation.
        refs = {
            1e-6: -16.626508901372475,
            1e-3: -9.118006470402742,
            0.1: -3.577152063957297,
            0.3: -1.781337023421627,
        }
        for x, want in refs.items():
            assert h_inv_exact(x) == pytest.approx(want, abs=1e-6)

    def test_approx_error_profile(self):
        # The closed-form approximation is loose deep in the tail (worst case
        # ~0.95 at 1e-6) but tight near the endpoint.
        assert abs(h_inv_approx(1e-6) - h_inv_exact(1e-6)) == pytest.approx(0.952, abs=0.01)
        assert abs(h_inv_approx(0.3) - h_inv_exact(0.3)) < 0.05

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            h_inv_approx(0.5)
        with pytest.raises(ValueError):
            h_inv_approx(0.0)
        with pytest.raises(ValueError):
            h_inv_exact(0.0)


class TestEraLogits:
    @given(feasible_cfgs(), st.integers(0, 2 ** 31 - 1), st.floats(0.5, 5.0))
    @settings(max_examples=100, deadline=None)
    def test_entropy_floor_exact_inverse(self, cfg, seed, scale):
        z = np.random.default_rng(seed).standard_normal(cfg.classes) * scale
        out = era_logits(z, cfg, inverse="exact")
        assert categorical_entropy(out) >= cfg.target_entropy - 1e-9

    @given(feasible_cfgs(), st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_approx_inverse_entropy_deficit_small(self, cfg, seed):
        z = np.random.default_rng(seed).standard_normal(cfg.classes) * 2.0
        out = era_logits(z, cfg, inverse="approx")
        assert categorical_entropy(out) >= cfg.target_entropy - 0.05

    def test_order_preserved(self):
        cfg = EraDiscreteConfig(target_entropy=1.5, classes=5)
        z = np.array([2.0, -1.0, 0.5, 0.0, -3.0])
        out = era_logits(z, cfg).z
        assert np.all(np.argsort(out) == np.argsort(z))

    def test_uniform_target_gives_uniform_output(self):
        cfg = EraDiscreteConfig(target_entropy=math.log(10), classes=10, tau=math.e)
        out = era_logits(np.random.default_rng(0).standard_normal(10) * 3.0, cfg)
        assert categorical_entropy(out) == pytest.approx(math.log(10), abs=1e-9)

    def test_unknown_inverse_rejected(self):
        cfg = EraDiscreteConfig(target_entropy=1.5, classes=5)
        with pytest.raises(ValueError):
            era_logits(np.zeros(5), cfg, inverse="bogus")
