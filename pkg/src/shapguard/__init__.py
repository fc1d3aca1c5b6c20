"""Entropy-regularized energy forecasting with exact Shapley explanations
and explanation-level membership inference audits."""

__version__ = "0.1.0"
