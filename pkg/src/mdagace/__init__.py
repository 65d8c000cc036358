"""Recoverability of the average causal effect under missingness DAGs,
exact identification oracles and the imputation simulation study."""

__version__ = "0.1.0"
