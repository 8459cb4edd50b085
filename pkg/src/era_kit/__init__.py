"""Entropy-floor activations for policies and classifiers, with desk-scale
trainers and executable verification of the entropy bounds."""

from .distributions import (
    CategoricalLogits,
    GaussianPolicyParams,
    categorical_entropy,
    gaussian_entropy,
    truncated_entropy,
    truncated_log_prob,
    truncated_sample,
)
from .era_continuous import EraContinuousConfig, delta_tn_analytic, era_activate, era_activate_batch
from .era_discrete import EraDiscreteConfig, era_logits, h_inv_approx, h_inv_exact, kappa
from .era_llm import EraLlmConfig, era_transform, grpo_advantages, h_resp, logit_factors
from .verify import run_suite

__all__ = [
    "CategoricalLogits",
    "GaussianPolicyParams",
    "categorical_entropy",
    "gaussian_entropy",
    "truncated_entropy",
    "truncated_log_prob",
    "truncated_sample",
    "EraContinuousConfig",
    "delta_tn_analytic",
    "era_activate",
    "era_activate_batch",
    "EraDiscreteConfig",
    "era_logits",
    "h_inv_approx",
    "h_inv_exact",
    "kappa",
    "EraLlmConfig",
    "era_transform",
    "grpo_advantages",
    "h_resp",
    "logit_factors",
    "run_suite",
]
