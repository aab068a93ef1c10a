"""Perturbative construction of static Einstein-Dirac solitons from the Choquard ground state."""

from .continuation import (Branch, BranchPoint, NewtonFailure, NewtonResult, NoBranchError,
                           SolverConfig, continuity_slope, continue_branch, distance,
                           newton_correct)
from .normalization import BracketError, norm_at, normalized_solution
from .physical import (NORM_TARGET, PhysicalResidual, PhysicalSolution, diagnostics,
                       physical_residual, unrescale, vacuum)
from .system import (K3_TERMS, PerturbedState, PositivityError, RescalingMap, Residual,
                     exterior_condition, jacobian, k3_terms, k_terms, metric_A, residual_D,
                     residual_compact_L3, y_norms)

__all__ = [
    "Branch", "BranchPoint", "NewtonFailure", "NewtonResult", "NoBranchError", "SolverConfig",
    "continuity_slope", "continue_branch", "distance", "newton_correct", "BracketError", "norm_at",
    "normalized_solution", "NORM_TARGET", "PhysicalResidual", "PhysicalSolution", "diagnostics",
    "physical_residual", "unrescale", "vacuum", "K3_TERMS", "PerturbedState", "PositivityError",
    "RescalingMap", "Residual", "exterior_condition", "jacobian", "k3_terms", "k_terms",
    "metric_A", "residual_D", "residual_compact_L3", "y_norms",
]
