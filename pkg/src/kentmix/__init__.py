"""Kent (FB5) distributions and their finite mixtures on the unit sphere."""

from .fit import FitResult, SufficientStats, compute_stats, fit_exact_mle, fit_kent, kent_loglik, loglik_and_grad
from .kent import (
    KentParams,
    NormConstError,
    bvn_approx_variances,
    condition_number,
    log_density,
    log_norm_const,
    norm_const,
    sample_kent,
    sample_uniform_sphere,
)
from .mixture import EMTrace, MixtureModel, e_step, harden, m_step, mixture_log_density, mixture_loglik, run_em
from .selection import ModelScore, aic_score, count_parameters, select_fixed_g, select_stepwise
from .sphere import angles_to_vector, angular_separation, euler_to_matrix, matrix_to_euler, schmidt_project, vector_to_angles

__version__ = "0.1.0"

__all__ = [
    "EMTrace", "FitResult", "KentParams", "MixtureModel", "ModelScore", "NormConstError", "SufficientStats",
    "aic_score", "angles_to_vector", "angular_separation", "bvn_approx_variances", "compute_stats",
    "condition_number", "count_parameters", "e_step", "euler_to_matrix", "fit_exact_mle", "fit_kent", "harden",
    "kent_loglik", "log_density", "log_norm_const", "loglik_and_grad", "m_step", "matrix_to_euler",
    "mixture_log_density", "mixture_loglik", "norm_const", "run_em", "sample_kent", "sample_uniform_sphere",
    "schmidt_project", "select_fixed_g", "select_stepwise", "vector_to_angles",
]
