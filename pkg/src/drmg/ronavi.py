"""Online robust optimistic Nash value iteration (TV and KL variants).

Each episode: estimate the nominal kernel from counts, plan optimistic and
pessimistic robust Q-tables over the empirical uncertainty set with an
exploration bonus, take stage equilibria of the optimistic tables, execute
the policy in the nominal environment and record the transitions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .episodes import RegretTrace, TraceRow, Transition, simulate_episode
from .equilibria import EquilibriumKind, MatrixGame, solve_equilibrium
from .game_core import Divergence, GameSpec, JointPolicy
from .robust_dual import robust_expectation
from .robust_planning import agent_gaps, clip_gap


class CountStore:
    """Visit counts N3[h, s, j, s'] and the empirical kernel they induce."""

    def __init__(self, horizon: int, num_states: int, num_joint: int):
        self.N3 = np.zeros((horizon, num_states, num_joint, num_states), dtype=np.int64)
        self.N = np.zeros((horizon, num_states, num_joint), dtype=np.int64)
        self.P_hat = np.zeros((horizon, num_states, num_joint, num_states))

    @classmethod
    def for_spec(cls, spec: GameSpec) -> "CountStore":
        return cls(spec.horizon, spec.num_states, spec.num_joint)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.N.shape

    def update(self, trajectory: Sequence[Transition]) -> "CountStore":
        H, S, J = self.shape
        for t in trajectory:
            h, s, a, s2 = int(t.h), int(t.s), int(t.a), t.s_next
            if s2 is None:
                continue
            if not (0 <= h < H and 0 <= s < S and 0 <= a < J and 0 <= s2 < S):
                raise IndexError(f"transition {(h, s, a, s2)} out of range")
            self.N3[h, s, a, s2] += 1
            self.N[h, s, a] += 1
            self.P_hat[h, s, a] = self.N3[h, s, a] / max(self.N[h, s, a], 1)
        return self

    def total(self) -> int:
        return int(self.N.sum())


def update_counts(store: CountStore, trajectory: Sequence[Transition]) -> CountStore:
    return store.update(trajectory)


@dataclass
class ValueBounds:
    Vu: np.ndarray   # (m, H+1, S) optimistic
    Vl: np.ndarray   # (m, H+1, S) pessimistic
    Qu: np.ndarray   # (m, H, S, J)
    Ql: np.ndarray   # (m, H, S, J)
    bonus: np.ndarray  # (m, H, S, J)

    @classmethod
    def zeros(cls, m: int, H: int, S: int, J: int) -> "ValueBounds":
        return cls(
            np.zeros((m, H + 1, S)), np.zeros((m, H + 1, S)),
            np.zeros((m, H, S, J)), np.zeros((m, H, S, J)), np.zeros((m, H, S, J)),
        )


@dataclass
class LearnerConfig:
    episodes: int
    delta: float = 0.05
    kind: EquilibriumKind = EquilibriumKind.CCE
    c1: float = 1.0
    c2: float = 1.0
    cf: float = 1.0
    eta_floor: float | None = None
    seed: int = 0
    score_every: int = 1
    score_kinds: tuple[EquilibriumKind, ...] | None = None
    equilibrium_tol: float = 1e-6

    def __post_init__(self):
        self.kind = EquilibriumKind(self.kind)
        if self.score_kinds is not None:
            self.score_kinds = tuple(EquilibriumKind(k) for k in self.score_kinds)
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if min(self.c1, self.c2, self.cf) <= 0:
            raise ValueError("bonus constants must be positive")
        if self.eta_floor is not None and self.eta_floor <= 0:
            raise ValueError("eta_floor must be positive")
        if self.score_every < 0:
            raise ValueError("score_every must be >= 0 (0 disables scoring)")

    @property
    def kinds_to_score(self) -> tuple[EquilibriumKind, ...]:
        return self.score_kinds if self.score_kinds else (self.kind,)


def log_factor(num_states: int, num_joint: int, horizon: int, episodes: int, delta: float) -> float:
    """log(S^2 * prod(A) * H^2 * K^{3/2} / delta)."""
    return math.log(num_states ** 2 * num_joint * horizon ** 2 * episodes ** 1.5 / delta)


def _iota(store: CountStore, cfg: LearnerConfig) -> float:
    H, S, J = store.shape
    return log_factor(S, J, H, cfg.episodes, cfg.delta)


def tv_bonus_table(h: int, agent: int, store: CountStore, bounds: ValueBounds, cfg: LearnerConfig) -> np.ndarray:
    """TV exploration bonus for every (s, j) at step h, shape (S, J)."""
    H, S, J = store.shape
    iota = _iota(store, cfg)
    n = np.maximum(store.N[h], 1).astype(float)
    P = store.P_hat[h]
    mid = 0.5 * (bounds.Vu[agent, h + 1] + bounds.Vl[agent, h + 1])
    mean = P @ mid
    var = np.maximum(P @ (mid ** 2) - mean ** 2, 0.0)
    width = P @ (bounds.Vu[agent, h + 1] - bounds.Vl[agent, h + 1])
    return (
        np.sqrt(cfg.c1 * iota * var / n)
        + cfg.c2 * H ** 2 * S * iota / np.sqrt(n)
        + 2.0 * width / H
        + 1.0 / math.sqrt(cfg.episodes)
    )


def kl_bonus_table(h: int, agent: int, store: CountStore, spec: GameSpec, cfg: LearnerConfig) -> np.ndarray:
    """KL exploration bonus for every (s, j) at step h, shape (S, J).

    Cells with zero radius use a Hoeffding bonus H * sqrt(iota / n) instead,
    since the 1/sigma form is undefined there.
    """
    H, S, J = store.shape
    iota = _iota(store, cfg)
    n = np.maximum(store.N[h], 1).astype(float)
    P = store.P_hat[h]
    p_min = np.where(P > 0, P, np.inf).min(axis=-1)
    p_min = np.where(np.isfinite(p_min), p_min, 1.0)
    sigma = spec.sigma[agent, h]
    with np.errstate(divide="ignore"):
        robust = 2.0 * cfg.cf * H / sigma * np.sqrt(iota / (n * p_min))
    plain = H * np.sqrt(iota / n)
    return np.where(sigma > 0, robust, plain) + math.sqrt(1.0 / cfg.episodes)


def bonus_tv(agent, h, s, a, store: CountStore, bounds: ValueBounds, cfg: LearnerConfig) -> float:
    return float(tv_bonus_table(h, agent, store, bounds, cfg)[s, a])


def bonus_kl(agent, h, s, a, store: CountStore, spec: GameSpec, cfg: LearnerConfig) -> float:
    return float(kl_bonus_table(h, agent, store, spec, cfg)[s, a])


def plan_episode(
    store: CountStore, spec: GameSpec, cfg: LearnerConfig, *, use_bonus: bool = True
) -> tuple[JointPolicy, ValueBounds]:
    """Optimistic robust planning on the empirical kernel.

    Under TV, the empirical support function drops the min-V term when the
    game has fail states (their value is identically zero).
    """
    m, H, S, J = spec.num_agents, spec.horizon, spec.num_states, spec.num_joint
    b = ValueBounds.zeros(m, H, S, J)
    dist = np.zeros((H, S, J))
    zero_min = spec.divergence is Divergence.TV and bool(spec.fail_states)
    for h in reversed(range(H)):
        P = store.P_hat[h]
        for i in range(m):
            sig = spec.sigma[i, h]
            if not use_bonus:
                beta = np.zeros((S, J))
            elif spec.divergence is Divergence.TV:
                beta = tv_bonus_table(h, i, store, b, cfg)
            else:
                beta = kl_bonus_table(h, i, store, spec, cfg)
            up = robust_expectation(
                b.Vu[i, h + 1], P, sig, spec.divergence, upper=float(H),
                assume_zero_min=zero_min, eta_floor=cfg.eta_floor,
            )
            lo = robust_expectation(
                b.Vl[i, h + 1], P, sig, spec.divergence, upper=float(H),
                assume_zero_min=zero_min, eta_floor=cfg.eta_floor,
            )
            r = spec.rewards[i, h]
            b.bonus[i, h] = beta
            b.Qu[i, h] = np.minimum(r + up + beta, H)
            b.Ql[i, h] = np.maximum(r + lo - beta, 0.0)
        for s in range(S):
            game = MatrixGame(b.Qu[:, h, s, :], spec.actions)
            dist[h, s] = solve_equilibrium(game, cfg.kind, cfg.equilibrium_tol)
        b.Vu[:, h] = np.einsum("sj,isj->is", dist[h], b.Qu[:, h])
        b.Vl[:, h] = np.einsum("sj,isj->is", dist[h], b.Ql[:, h])
    return JointPolicy(dist, spec.actions, product=cfg.kind is EquilibriumKind.NASH), b


def draw_initial_state(spec: GameSpec, rng: np.random.Generator) -> int:
    if spec.initial_state is not None:
        return spec.initial_state
    states = spec.regular_states
    return int(states[rng.integers(len(states))])


@dataclass
class OnlineResult:
    trace: RegretTrace
    policies: list[JointPolicy] = field(default_factory=list)
    store: CountStore | None = None

    @property
    def certified_index(self) -> int | None:
        """Index (0-based) of the executed policy with the smallest measured gap."""
        return self.trace.certified_index()

    @property
    def certified_policy(self) -> JointPolicy | None:
        k = self.certified_index
        return None if k is None else self.policies[k]


Sampler = Callable[[GameSpec, JointPolicy, int, np.random.Generator], list[Transition]]
EpisodeHook = Callable[[int, JointPolicy, ValueBounds, CountStore], None]


def run_online(
    spec: GameSpec,
    cfg: LearnerConfig,
    env_sampler: Sampler | None = None,
    *,
    on_episode: EpisodeHook | None = None,
    keep_policies: bool = True,
) -> OnlineResult:
    """Run K episodes of the learner against the nominal environment.

    Episode k is scored (robust equilibrium gap at its initial state under the
    true model) when ``k % score_every == 0`` or k is the last episode.
    """
    sampler = env_sampler or simulate_episode
    rng = np.random.default_rng(cfg.seed)
    store = CountStore.for_spec(spec)
    trace = RegretTrace(kinds=cfg.kinds_to_score, primary=cfg.kinds_to_score[0])
    policies: list[JointPolicy] = []
    for k in range(1, cfg.episodes + 1):
        t0 = time.perf_counter()
        policy, bounds = plan_episode(store, spec, cfg)
        if on_episode is not None:
            on_episode(k, policy, bounds, store)
        s1 = draw_initial_state(spec, rng)
        traj = sampler(spec, policy, s1, rng)
        store.update(traj)
        if keep_policies:
            policies.append(policy)
        if cfg.score_every and (k % cfg.score_every == 0 or k == cfg.episodes):
            gaps = {
                kind: clip_gap(agent_gaps(spec, policy, s1, kind)) for kind in cfg.kinds_to_score
            }
            trace.append(TraceRow(
                k=k, s1=s1, gaps=gaps, t_ms=1000.0 * (time.perf_counter() - t0),
                visits=store.total(),
            ))
    return OnlineResult(trace, policies, store)
