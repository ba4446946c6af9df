"""Numerical laboratory for linear eigenvalue statistics of one-cut log-gases."""

from .potential import Potential, TestFunction, eval_potential, perturb
from .equilibrium import compute_P, compute_density, quartic_family, verify_one_cut
from .orthopoly import build_recurrence, evaluate_basis, epsilon_transform, overlap_matrix
from .kernels import (build_basis, build_matrix_kernel, cd_kernel,
                      perturbation_stability, variance_beta1, variance_beta2)
from .asymptotics import (free_jacobi_entry, m_matrix_limit_check,
                          recurrence_asymptotics_check, string_equation_residual,
                          toeplitz_limits)
from .sampler import (SamplerConfig, chain_diagnostics, sample_log_gas,
                      sample_tridiagonal_gaussian)
from .clt import clt_experiment, fluctuation_report, linear_statistic

__version__ = "0.1.0"
