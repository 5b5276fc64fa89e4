"""Equilibria, verification and simulation for a stochastic acquisition game.

Two agents race to contact one or two locks before a deadline, each
controlling the rate of its own Poisson contact process at a cost.
"""

from ._accel import backend
from .analytic import UtilityReport, expected_cost, success_prob_one_lock, success_prob_two_lock, utility, utility_one_lock, utility_two_lock
from .equilibrium import (
    EquilibriumResult,
    best_response_one_lock,
    best_response_two_lock,
    check_ne_conditions,
    nash,
    nash_n_player_conjecture,
    nash_one_lock,
    nash_two_lock,
    solve_psi_fixed_point,
    stage2_value,
)
from .hjb import CandidateValue, ResidualReport, candidate_W_silent, candidate_W_threshold, hjb_residual
from .model import (
    Control,
    Flag,
    GameParams,
    ParameterError,
    PiecewiseConstantControl,
    StageState,
    ThresholdPolicy,
    TwoStagePolicy,
    cumulative_rate,
    make_threshold_control,
    validate_params,
)
from .montecarlo import EpisodeOutcome, RngSpec, estimate_utilities, sample_contact_time, simulate_episode
from .oracle import GridSpec, grid_best_response, grid_best_response_two_stage, quadrature_utility, two_stage_utility

__version__ = "0.1.0"
