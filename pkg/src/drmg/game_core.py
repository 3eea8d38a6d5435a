"""Data model for distributionally robust Markov games.

A game is stored as dense numpy tables indexed ``[agent, step, state, joint]``
where ``joint`` is the row-major encoding of the per-agent action tuple.
Steps are 0-based in code and on disk (step 0 is the first decision).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ROW_TOL = 1e-12


class Divergence(str, enum.Enum):
    TV = "TV"
    KL = "KL"


def joint_size(actions_per_agent: Sequence[int]) -> int:
    return int(np.prod(actions_per_agent, dtype=np.int64))


def joint_index(per_agent_actions: Sequence[int], actions_per_agent: Sequence[int]) -> int:
    """Row-major index of a per-agent action tuple.

    >>> joint_index((1, 2), (2, 3))
    5
    """
    if len(per_agent_actions) != len(actions_per_agent):
        raise IndexError("action tuple length does not match number of agents")
    for a, n in zip(per_agent_actions, actions_per_agent):
        if not 0 <= a < n:
            raise IndexError(f"action {a} out of range for agent with {n} actions")
    return int(np.ravel_multi_index(tuple(per_agent_actions), tuple(actions_per_agent)))


def joint_actions(index: int, actions_per_agent: Sequence[int]) -> tuple[int, ...]:
    """Inverse of :func:`joint_index`."""
    if not 0 <= index < joint_size(actions_per_agent):
        raise IndexError(f"joint index {index} out of range")
    return tuple(int(x) for x in np.unravel_index(index, tuple(actions_per_agent)))


def joint_table(actions_per_agent: Sequence[int]) -> np.ndarray:
    """Array of shape (num_joint, num_agents); row j is the action tuple of joint j."""
    grids = np.indices(tuple(actions_per_agent)).reshape(len(actions_per_agent), -1)
    return grids.T.copy()


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Finite-horizon DRMG.

    rewards:  (m, H, S, J) mean rewards in [0, 1]
    kernel:   (H, S, J, S) nominal transition rows
    radii:    (m,) base uncertainty radius per agent
    radius_override: optional (m, H, S, J) table; NaN entries fall back to ``radii``
    """

    actions: tuple[int, ...]
    horizon: int
    rewards: np.ndarray
    kernel: np.ndarray
    radii: np.ndarray
    divergence: Divergence = Divergence.TV
    fail_states: tuple[int, ...] = ()
    radius_override: np.ndarray | None = None
    bernoulli: bool = False
    initial_state: int | None = None
    name: str = ""
    _sigma: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        object.__setattr__(self, "divergence", Divergence(self.divergence))
        object.__setattr__(self, "fail_states", tuple(sorted(int(s) for s in self.fail_states)))
        object.__setattr__(self, "rewards", _frozen(self.rewards))
        object.__setattr__(self, "kernel", _frozen(self.kernel))
        object.__setattr__(self, "radii", _frozen(np.atleast_1d(self.radii)))
        sigma = np.broadcast_to(
            self.radii.reshape(-1, 1, 1, 1), self.rewards.shape
        ).copy() if self.rewards.ndim == 4 and self.radii.size == self.rewards.shape[0] else None
        if self.radius_override is not None:
            override = np.array(self.radius_override, dtype=float)
            object.__setattr__(self, "radius_override", _frozen(override))
            if sigma is not None and override.shape == sigma.shape:
                mask = ~np.isnan(override)
                sigma[mask] = override[mask]
        if sigma is not None:
            sigma.setflags(write=False)
        object.__setattr__(self, "_sigma", sigma)

    @property
    def num_agents(self) -> int:
        return len(self.actions)

    @property
    def num_states(self) -> int:
        return self.kernel.shape[1]

    @property
    def num_joint(self) -> int:
        return joint_size(self.actions)

    @property
    def sigma(self) -> np.ndarray:
        """Effective radius table of shape (m, H, S, J)."""
        if self._sigma is None:
            raise ValueError("radius table unavailable: spec is malformed (run validate_spec)")
        return self._sigma

    @property
    def regular_states(self) -> tuple[int, ...]:
        fail = set(self.fail_states)
        return tuple(s for s in range(self.num_states) if s not in fail)

    def with_divergence(self, divergence) -> "GameSpec":
        return GameSpec(
            actions=self.actions, horizon=self.horizon, rewards=self.rewards,
            kernel=self.kernel, radii=self.radii, divergence=divergence,
            fail_states=self.fail_states, radius_override=self.radius_override,
            bernoulli=self.bernoulli, initial_state=self.initial_state, name=self.name,
        )


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "ok" if self.ok else "\n".join(self.violations)


def validate_spec(spec: GameSpec) -> ValidationReport:
    """Check every structural invariant and report all violations found."""
    report = ValidationReport()
    bad = report.violations
    m, H = spec.num_agents, spec.horizon
    if m < 1 or any(a < 1 for a in spec.actions):
        bad.append("actions: every agent needs at least one action")
        return report
    if H < 1:
        bad.append("horizon must be positive")
        return report
    J = spec.num_joint
    if spec.kernel.ndim != 4 or spec.kernel.shape[0] != H or spec.kernel.shape[2] != J \
            or spec.kernel.shape[1] != spec.kernel.shape[3]:
        bad.append(f"kernel shape {spec.kernel.shape} != (H={H}, S, J={J}, S)")
        return report
    S = spec.num_states
    if spec.rewards.shape != (m, H, S, J):
        bad.append(f"rewards shape {spec.rewards.shape} != {(m, H, S, J)}")
        return report
    if spec.radii.shape != (m,):
        bad.append(f"radii shape {spec.radii.shape} != ({m},)")
        return report
    if spec.radius_override is not None and spec.radius_override.shape != (m, H, S, J):
        bad.append(f"radius_override shape {spec.radius_override.shape} != {(m, H, S, J)}")
        return report

    for h, s, a in zip(*np.nonzero((spec.kernel < 0).any(axis=-1))):
        bad.append(f"kernel row (h={h}, s={s}, a={a}) has negative entries")
    sums = spec.kernel.sum(axis=-1)
    for h, s, a in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_TOL)):
        bad.append(f"kernel row (h={h}, s={s}, a={a}) sums to {sums[h, s, a]:.12g}")
    r = spec.rewards
    if not np.all(np.isfinite(r)) or r.min() < 0 or r.max() > 1:
        bad.append("rewards must lie in [0, 1]")
    sig = spec.sigma
    if not np.all(np.isfinite(sig)) or sig.min() < 0:
        bad.append("radii must be finite and non-negative")
    if spec.bernoulli and H != 1:
        bad.append("Bernoulli rewards are only supported for horizon-1 instances")
    if any(not 0 <= s < S for s in spec.fail_states):
        bad.append("fail_states contains an out-of-range state")
        return report
    if spec.initial_state is not None and not 0 <= spec.initial_state < S:
        bad.append(f"initial_state {spec.initial_state} out of range")

    if spec.divergence is Divergence.TV and (sig > 0).any():
        fail = list(spec.fail_states)
        if not fail:
            bad.append("fail-structure: TV game with positive radius has no fail states")
        else:
            if np.any(r[:, :, fail, :] != 0):
                bad.append("fail-structure: fail states must carry zero reward for all agents")
            outside = np.ones(S, dtype=bool)
            outside[fail] = False
            leak = spec.kernel[:, fail, :, :][..., outside]
            if np.any(leak > 0):
                bad.append("fail-structure: kernel rows at fail states must stay inside the fail set")
    return report


def fail_state_kernel_row(num_states: int, fail_states: Sequence[int]) -> np.ndarray:
    """Uniform distribution over the fail set (normalised by |S_f|)."""
    row = np.zeros(num_states)
    row[list(fail_states)] = 1.0 / len(fail_states)
    return row


def build_initial_shock(
    num_agents: int,
    num_actions: int,
    horizon: int,
    sigma: float,
    secret_action: Sequence[int] | int,
    fail_state: bool = False,
) -> GameSpec:
    """Two-state trap game with a hidden escape joint action.

    State 0 is the good state, state 1 the trap. The trap is left only under
    ``secret_action``. Uncertainty (TV, radius ``sigma``) exists only at step 0
    in the good state. With ``fail_state=True`` a third absorbing zero-reward
    state is appended so the game satisfies the fail-state structure.
    """
    if horizon < 2:
        raise ValueError("horizon must be at least 2")
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    actions = (num_actions,) * num_agents
    J = joint_size(actions)
    if isinstance(secret_action, (int, np.integer)):
        if not 0 <= secret_action < J:
            raise ValueError(f"secret joint action {secret_action} out of range")
        star = int(secret_action)
    else:
        try:
            star = joint_index(secret_action, actions)
        except IndexError as exc:
            raise ValueError(f"invalid secret action {secret_action!r}") from exc

    good, trap = 0, 1
    S = 3 if fail_state else 2
    rewards = np.zeros((num_agents, horizon, S, J))
    rewards[:, :, good, :] = 1.0
    rewards[:, :, trap, star] = 1.0
    kernel = np.zeros((horizon, S, J, S))
    kernel[:, good, :, good] = 1.0
    kernel[:, trap, :, trap] = 1.0
    kernel[:, trap, star, trap] = 0.0
    kernel[:, trap, star, good] = 1.0
    fails: tuple[int, ...] = ()
    if fail_state:
        fails = (2,)
        kernel[:, 2, :, 2] = 1.0

    override = np.zeros((num_agents, horizon, S, J))
    override[:, 0, good, :] = sigma
    return GameSpec(
        actions=actions, horizon=horizon, rewards=rewards, kernel=kernel,
        radii=np.full(num_agents, sigma), divergence=Divergence.TV,
        fail_states=fails, radius_override=override, initial_state=good,
        name="initial-shock",
    )


def build_corrupted_bandit(
    actions_per_agent: Sequence[int],
    epsilon: float,
    sigma: float,
    secret_arm: Sequence[int] | int,
) -> GameSpec:
    """Single-state, horizon-1 game with Bernoulli rewards; one joint arm is better by ``epsilon``."""
    if not 0 <= epsilon < 0.5:
        raise ValueError("epsilon must lie in [0, 1/2)")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    actions = tuple(int(a) for a in actions_per_agent)
    m, J = len(actions), joint_size(actions)
    if isinstance(secret_arm, (int, np.integer)):
        if not 0 <= secret_arm < J:
            raise ValueError(f"secret arm {secret_arm} out of range")
        theta = int(secret_arm)
    else:
        theta = joint_index(secret_arm, actions)
    means = np.full((m, 1, 1, J), 0.5)
    means[..., theta] += epsilon
    kernel = np.ones((1, 1, J, 1))
    return GameSpec(
        actions=actions, horizon=1, rewards=means, kernel=kernel,
        radii=np.full(m, float(sigma)), divergence=Divergence.KL,
        bernoulli=True, initial_state=0, name="corrupted-bandit",
    )


def build_random_game(
    num_agents: int,
    num_states: int,
    actions_per_agent: Sequence[int],
    horizon: int,
    radii: Sequence[float] | float,
    divergence=Divergence.TV,
    seed: int = 0,
) -> GameSpec:
    """Random general-sum game with Dirichlet(1) kernel rows and uniform rewards.

    Under TV with a positive radius, one absorbing zero-reward fail state is
    appended (so the returned game has ``num_states + 1`` states). Nominal rows
    from regular states never enter the fail state.
    """
    divergence = Divergence(divergence)
    actions = tuple(int(a) for a in actions_per_agent)
    if len(actions) != num_agents:
        raise ValueError("actions_per_agent length must equal num_agents")
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (num_agents,)).copy()
    rng = np.random.default_rng(seed)
    J = joint_size(actions)
    S0 = num_states
    augment = divergence is Divergence.TV and bool((radii > 0).any())
    S = S0 + 1 if augment else S0

    kernel = np.zeros((horizon, S, J, S))
    kernel[:, :S0, :, :S0] = rng.dirichlet(np.ones(S0), size=(horizon, S0, J))
    rewards = np.zeros((num_agents, horizon, S, J))
    rewards[:, :, :S0, :] = rng.uniform(size=(num_agents, horizon, S0, J))
    fails: tuple[int, ...] = ()
    if augment:
        fails = (S0,)
        kernel[:, S0, :, :] = fail_state_kernel_row(S, fails)
    # renormalise in float64 so rows sum to 1 within ROW_TOL
    kernel /= kernel.sum(axis=-1, keepdims=True)
    return GameSpec(
        actions=actions, horizon=horizon, rewards=rewards, kernel=kernel,
        radii=radii, divergence=divergence, fail_states=fails, name=f"random-{seed}",
    )


def reference_game(divergence=Divergence.TV, sigma: float = 0.2, seed: int = 0) -> GameSpec:
    """The small benchmark game used by the regret experiments: m=2, S=3 (+fail), A=(2,2), H=3.

    The same tables (including the fail state) are used under both divergences.
    """
    return build_random_game(2, 3, (2, 2), 3, sigma, Divergence.TV, seed).with_divergence(divergence)


@dataclass(frozen=True, eq=False)
class JointPolicy:
    """Per-step, per-state distributions over joint actions, shape (H, S, J)."""

    dist: np.ndarray
    actions: tuple[int, ...]
    product: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dist", _frozen(self.dist))
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))

    @property
    def horizon(self) -> int:
        return self.dist.shape[0]

    @property
    def num_states(self) -> int:
        return self.dist.shape[1]

    def tensor(self) -> np.ndarray:
        """Distribution reshaped to (H, S, A_1, ..., A_m)."""
        return self.dist.reshape(self.dist.shape[:2] + self.actions)

    def marginal(self, agent: int) -> np.ndarray:
        """Agent's own marginal, shape (H, S, A_agent)."""
        axes = tuple(2 + j for j in range(len(self.actions)) if j != agent)
        return self.tensor().sum(axis=axes)

    def others_marginal(self, agent: int) -> np.ndarray:
        """Marginal over the other agents' actions, shape (H, S, J / A_agent), row-major in the remaining agents."""
        t = self.tensor().sum(axis=2 + agent)
        return t.reshape(t.shape[:2] + (-1,))

    def check(self, tol: float = ROW_TOL) -> list[str]:
        bad = []
        if self.dist.ndim != 3 or self.dist.shape[2] != joint_size(self.actions):
            return [f"policy shape {self.dist.shape} incompatible with actions {self.actions}"]
        if (self.dist < 0).any():
            bad.append("policy has negative entries")
        if np.any(np.abs(self.dist.sum(axis=-1) - 1) > tol):
            bad.append("policy rows do not sum to 1")
        if self.product:
            outer = product_policy([self.marginal(i) for i in range(len(self.actions))])
            if np.max(np.abs(outer - self.dist)) > 1e-10:
                bad.append("policy flagged as product but does not factorise")
        return bad

    @classmethod
    def uniform(cls, spec: GameSpec) -> "JointPolicy":
        J = spec.num_joint
        return cls(np.full((spec.horizon, spec.num_states, J), 1.0 / J), spec.actions, product=True)

    @classmethod
    def from_marginals(cls, marginals: Sequence[np.ndarray]) -> "JointPolicy":
        actions = tuple(mg.shape[-1] for mg in marginals)
        return cls(product_policy(marginals), actions, product=True)

    @classmethod
    def deterministic(cls, joint: np.ndarray, actions: Sequence[int]) -> "JointPolicy":
        """Point-mass policy from an (H, S) integer table of joint indices."""
        joint = np.asarray(joint, dtype=int)
        dist = np.zeros(joint.shape + (joint_size(actions),))
        np.put_along_axis(dist, joint[..., None], 1.0, axis=-1)
        return cls(dist, tuple(actions), product=True)


def product_policy(marginals: Sequence[np.ndarray]) -> np.ndarray:
    """Row-major outer product of per-agent marginals with shared leading axes."""
    out = np.asarray(marginals[0], dtype=float)
    for mg in marginals[1:]:
        mg = np.asarray(mg, dtype=float)
        out = (out[..., :, None] * mg[..., None, :]).reshape(out.shape[:-1] + (-1,))
    return out
