"""Robust dynamic programming under the true nominal kernel.

These routines are the ground truth for scoring learners: robust policy
evaluation, robust best responses, best strategy modifications, and the
per-episode equilibrium gaps built from them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibria import EquilibriumKind, MatrixGame, solve_equilibrium
from .game_core import GameSpec, JointPolicy
from .robust_dual import robust_expectation

GAP_SLACK = 1e-9


@dataclass
class RobustValueTable:
    """V has shape (H+1, S) with a zero terminal row; Q has shape (H, S, J)."""

    V: np.ndarray
    Q: np.ndarray


@dataclass
class BestResponse:
    V: np.ndarray          # (H+1, S)
    Q: np.ndarray          # (H, S, J): r + robust continuation of V
    Q_dev: np.ndarray      # (H, S, A_i): deviator action values
    actions: np.ndarray    # (H, S) greedy deviator action, lowest index on ties


@dataclass
class ModificationValue:
    V: np.ndarray          # (H+1, S)
    swaps: np.ndarray      # (H, S, A_i): best replacement for each recommended action


def robust_backup(spec: GameSpec, agent: int, h: int, V_next: np.ndarray) -> np.ndarray:
    """Robust continuation value for every (s, joint) at step h, shape (S, J)."""
    return robust_expectation(
        V_next, spec.kernel[h], spec.sigma[agent, h], spec.divergence,
        upper=float(spec.horizon),
    )


def _check_policy(spec: GameSpec, policy: JointPolicy) -> None:
    if policy.dist.shape != (spec.horizon, spec.num_states, spec.num_joint):
        raise ValueError(f"policy shape {policy.dist.shape} does not match the game")


def _split_axes(spec: GameSpec, W: np.ndarray, agent: int) -> np.ndarray:
    """(S, J) -> (S, A_agent, J / A_agent) with the other agents row-major."""
    t = W.reshape((W.shape[0],) + spec.actions)
    t = np.moveaxis(t, 1 + agent, 1)
    return t.reshape(W.shape[0], spec.actions[agent], -1)


def robust_policy_eval(spec: GameSpec, policy: JointPolicy, agent: int) -> RobustValueTable:
    _check_policy(spec, policy)
    H, S, J = spec.horizon, spec.num_states, spec.num_joint
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, J))
    for h in reversed(range(H)):
        Q[h] = spec.rewards[agent, h] + robust_backup(spec, agent, h, V[h + 1])
        V[h] = np.einsum("sj,sj->s", policy.dist[h], Q[h])
    return RobustValueTable(V, Q)


def robust_best_response(spec: GameSpec, policy: JointPolicy, agent: int) -> BestResponse:
    """Best deviation of ``agent`` against the others' marginal policy."""
    _check_policy(spec, policy)
    H, S, J = spec.horizon, spec.num_states, spec.num_joint
    others = policy.others_marginal(agent)
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, J))
    Q_dev = np.zeros((H, S, spec.actions[agent]))
    acts = np.zeros((H, S), dtype=int)
    for h in reversed(range(H)):
        Q[h] = spec.rewards[agent, h] + robust_backup(spec, agent, h, V[h + 1])
        Q_dev[h] = np.einsum("sbo,so->sb", _split_axes(spec, Q[h], agent), others[h])
        acts[h] = np.argmax(Q_dev[h], axis=1)
        V[h] = Q_dev[h].max(axis=1)
    return BestResponse(V, Q, Q_dev, acts)


def best_modification_value(spec: GameSpec, policy: JointPolicy, agent: int) -> ModificationValue:
    """Value of the best strategy modification (recommended action -> replacement) for ``agent``."""
    _check_policy(spec, policy)
    H, S = spec.horizon, spec.num_states
    V = np.zeros((H + 1, S))
    swaps = np.zeros((H, S, spec.actions[agent]), dtype=int)
    for h in reversed(range(H)):
        W = spec.rewards[agent, h] + robust_backup(spec, agent, h, V[h + 1])
        pi = _split_axes(spec, policy.dist[h], agent)   # (S, a_i, others)
        Wb = _split_axes(spec, W, agent)                # (S, b, others)
        gain = np.einsum("sao,sbo->sab", pi, Wb)
        swaps[h] = np.argmax(gain, axis=2)
        V[h] = gain.max(axis=2).sum(axis=1)
    return ModificationValue(V, swaps)


def agent_gaps(spec: GameSpec, policy: JointPolicy, s1: int, kind=EquilibriumKind.CCE) -> np.ndarray:
    """Per-agent deviation value minus policy value at step 0, state s1 (unclipped)."""
    kind = EquilibriumKind(kind)
    gaps = np.empty(spec.num_agents)
    for i in range(spec.num_agents):
        base = robust_policy_eval(spec, policy, i).V[0, s1]
        if kind is EquilibriumKind.CE:
            dev = best_modification_value(spec, policy, i).V[0, s1]
        else:
            dev = robust_best_response(spec, policy, i).V[0, s1]
        gaps[i] = dev - base
    return gaps


def clip_gap(g):
    """Snap values within the numerical slack of zero (or below) to exactly 0."""
    g = np.asarray(g, dtype=float)
    return np.where(g > GAP_SLACK, g, 0.0)


def regret_gap(spec: GameSpec, policy: JointPolicy, s1: int, kind=EquilibriumKind.CCE) -> float:
    if not 0 <= s1 < spec.num_states:
        raise ValueError(f"initial state {s1} out of range")
    return float(clip_gap(np.max(agent_gaps(spec, policy, s1, kind))))


@dataclass
class EquilibriumSolution:
    policy: JointPolicy
    V: np.ndarray   # (m, H+1, S)
    Q: np.ndarray   # (m, H, S, J)


def exact_robust_vi(spec: GameSpec, kind=EquilibriumKind.CCE, tolerance: float = 1e-8) -> EquilibriumSolution:
    """One backward pass with the true kernel: stage equilibria on robust Q-values."""
    kind = EquilibriumKind(kind)
    m, H, S, J = spec.num_agents, spec.horizon, spec.num_states, spec.num_joint
    V = np.zeros((m, H + 1, S))
    Q = np.zeros((m, H, S, J))
    dist = np.zeros((H, S, J))
    for h in reversed(range(H)):
        for i in range(m):
            Q[i, h] = spec.rewards[i, h] + robust_backup(spec, i, h, V[i, h + 1])
        for s in range(S):
            dist[h, s] = solve_equilibrium(MatrixGame(Q[:, h, s, :], spec.actions), kind, tolerance)
        V[:, h] = np.einsum("sj,isj->is", dist[h], Q[:, h])
    policy = JointPolicy(dist, spec.actions, product=kind is EquilibriumKind.NASH)
    return EquilibriumSolution(policy, V, Q)
