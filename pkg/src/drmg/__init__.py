"""Tabular distributionally robust Markov games: robust duals, equilibria, robust DP and an online learner."""

from .episodes import RegretTrace, TraceRow, Transition, loglog_slope, simulate_episode
from .equilibria import (
    EquilibriumKind, EquilibriumNotFound, MatrixGame, UnsupportedEquilibrium, deviation_gains,
    equilibrium_gap, solve_equilibrium,
)
from .game_core import (
    Divergence, GameSpec, JointPolicy, ValidationReport, build_corrupted_bandit, build_initial_shock,
    build_random_game, joint_actions, joint_index, reference_game, validate_spec,
)
from .robust_dual import SupportQuery, SupportResult, brute_force_support, robust_expectation, support
from .robust_planning import (
    agent_gaps, best_modification_value, exact_robust_vi, regret_gap, robust_best_response,
    robust_policy_eval,
)
from .ronavi import CountStore, LearnerConfig, ValueBounds, plan_episode, run_online, update_counts

__version__ = "0.1.0"
