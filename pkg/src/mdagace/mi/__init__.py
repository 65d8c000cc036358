"""Multiple imputation: plans, FCS / SMC-FCS engines and pooling."""

from .impute import (ImputationError, ImputationWarning, ImputedSet, impute, impute_fcs,
                     impute_smcfcs)
from .plans import MI_VARIANTS, ImputationPlan, PlanError, Variant, build_plan
from .pool import PooledEstimate, pool_rubin, run_mi_method

__all__ = [
    "ImputationError", "ImputationPlan", "ImputationWarning", "ImputedSet", "MI_VARIANTS",
    "PlanError", "PooledEstimate", "Variant", "build_plan", "impute", "impute_fcs",
    "impute_smcfcs", "pool_rubin", "run_mi_method",
]
