"""Regularised identification of LTI systems with certified observer design.

Estimate ``[A, B]`` from multi-rollout data with a quadratic-loss support
vector regressor, bound the estimation error entrywise, design an observer
gain that is stable for every matrix in the bound, and evaluate its
mean-square error against a closed-form upper bound.
"""

from .bounds import BoundParams, BoundResult, compute_bounds, epsilon_norm_bounds, error_intervals, \
    h_bound, parameter_interval_a, theta_a, theta_b
from .estimator import Assembly, Estimate, Mode, RegressionData, Scaling, assemble_regression_data, \
    estimate_ols, estimate_svr, rmse, solve_dual_qp
from .exceptions import *  # noqa: F401,F403
from .lti import NoiseSpec, Rollout, RolloutSet, RngStream, SystemMatrices, collect_rollouts, \
    gaussian_vector, observe, stable_system, step, unstable_system
from .numerics import DEFAULT_TOL, SolverTolerances, eigenvalues, solve_dare, solve_discrete_lyapunov, \
    spectral_norm, spectral_radius
from .observer import IntervalMatrix, StabilityCertificate, design_gain, gershgorin_feasible, kalman_gain, \
    verify_stability_exhaustive
from .performance import ObserverLoop, PerformanceReport, TransferSpec, h2_norm, hinf_norm, j_opt_bound, \
    j_upper_bound, simulate_observer

__version__ = "0.1.0"
