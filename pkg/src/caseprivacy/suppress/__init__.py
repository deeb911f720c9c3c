"""Local cell suppression engine."""
from .engine import (
    K_ANONYMITY,
    L_DIVERSITY,
    EquivalenceClass,
    SuppressionAction,
    SuppressionPlan,
    apply_plan,
    class_ids,
    compute_classes,
    plan_k_suppression,
    plan_l_suppression,
    suppress,
    suppression_subsets,
)
from .kernels import BACKEND

__all__ = [
    "BACKEND",
    "K_ANONYMITY",
    "L_DIVERSITY",
    "EquivalenceClass",
    "SuppressionAction",
    "SuppressionPlan",
    "apply_plan",
    "class_ids",
    "compute_classes",
    "plan_k_suppression",
    "plan_l_suppression",
    "suppress",
    "suppression_subsets",
]
