"""Black-box hyperparameter optimization with Kriging and expected improvement.

The pipeline: Latin hypercube initialization, a Gaussian-process surrogate
fitted by minimizing the negative log marginal likelihood, (batch) expected
improvement inside an EGO loop, and ANOVA-based sensitivity analysis.
"""

from egohpo.search_space import ParameterSpec, SearchSpace
from egohpo.doe import DesignMatrix, lhs_sample, design_to_raw
from egohpo.gp import GpConfig, GpModel, KernelParams, Posterior, fit, kernel_matrix, nlml
from egohpo.acquisition import (
    AcquisitionContext,
    ProposalBatch,
    expected_improvement,
    propose_batch,
    q_expected_improvement,
)
from egohpo.driver import BudgetPlan, DriverConfig, Observation, RunHistory, best_so_far, phase_summary, run
from egohpo.sensitivity import AnovaRow, AnovaTable, anova_sequential, f_sf, fit_linear, ss_percentages

__version__ = "0.1.0"

__all__ = [
    "AcquisitionContext",
    "AnovaRow",
    "AnovaTable",
    "BudgetPlan",
    "DesignMatrix",
    "DriverConfig",
    "GpConfig",
    "GpModel",
    "KernelParams",
    "Observation",
    "ParameterSpec",
    "Posterior",
    "ProposalBatch",
    "RunHistory",
    "SearchSpace",
    "anova_sequential",
    "best_so_far",
    "design_to_raw",
    "expected_improvement",
    "f_sf",
    "fit",
    "fit_linear",
    "kernel_matrix",
    "lhs_sample",
    "nlml",
    "phase_summary",
    "propose_batch",
    "q_expected_improvement",
    "run",
    "ss_percentages",
]
