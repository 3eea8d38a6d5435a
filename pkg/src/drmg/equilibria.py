"""One-shot equilibria of normal-form games over a row-major joint action space."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares, linprog

from .game_core import joint_size, joint_table, product_policy

LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
MAX_NASH_JOINT = 64


class EquilibriumKind(str, enum.Enum):
    NASH = "NASH"
    CCE = "CCE"
    CE = "CE"


class UnsupportedEquilibrium(ValueError):
    """Requested Nash computation on a game outside the supported classes."""


class EquilibriumNotFound(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MatrixGame:
    """payoffs[i, j] is agent i's payoff at joint action j."""

    payoffs: np.ndarray
    actions: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        p = np.array(self.payoffs, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "payoffs", p)
        if p.shape != (len(self.actions), joint_size(self.actions)):
            raise ValueError(f"payoffs shape {p.shape} != {(len(self.actions), joint_size(self.actions))}")
        if not np.all(np.isfinite(p)):
            raise ValueError("payoffs must be finite")

    @property
    def num_agents(self) -> int:
        return len(self.actions)

    @property
    def num_joint(self) -> int:
        return self.payoffs.shape[1]


def swap_index(actions: Sequence[int]) -> list[np.ndarray]:
    """For each agent i, an (A_i, J) array: joint index of j with agent i's action replaced by b."""
    table = joint_table(actions)
    out = []
    for i, n in enumerate(actions):
        rows = []
        for b in range(n):
            t = table.copy()
            t[:, i] = b
            rows.append(np.ravel_multi_index(tuple(t.T), tuple(actions)))
        out.append(np.array(rows))
    return out


def _check_dist(game: MatrixGame, dist) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.shape != (game.num_joint,) or (dist < -1e-12).any() or abs(dist.sum() - 1) > 1e-9:
        raise ValueError("dist must be a probability vector over joint actions")
    return dist


def deviation_gains(game: MatrixGame, dist, kind=EquilibriumKind.CCE) -> np.ndarray:
    """Per-agent best deviation gain; the equilibrium gap is its maximum."""
    kind = EquilibriumKind(kind)
    dist = _check_dist(game, dist)
    table = joint_table(game.actions)
    swaps = swap_index(game.actions)
    gains = np.empty(game.num_agents)
    for i, u in enumerate(game.payoffs):
        base = dist @ u
        # dev[b, j] = payoff to i at j with own action replaced by b
        dev = u[swaps[i]]
        if kind is EquilibriumKind.CE:
            # best swap per recommended action a_i
            total = 0.0
            for a in range(game.actions[i]):
                mask = table[:, i] == a
                total += np.max(dev[:, mask] @ dist[mask])
            gains[i] = total - base
        else:
            gains[i] = np.max(dev @ dist) - base
    return gains


def equilibrium_gap(game: MatrixGame, dist, kind=EquilibriumKind.CCE) -> float:
    return max(float(np.max(deviation_gains(game, dist, kind))), 0.0)


def _deviation_rows(game: MatrixGame, kind: EquilibriumKind) -> np.ndarray:
    table = joint_table(game.actions)
    swaps = swap_index(game.actions)
    rows = []
    for i, u in enumerate(game.payoffs):
        for b in range(game.actions[i]):
            diff = u[swaps[i][b]] - u
            if kind is EquilibriumKind.CE:
                for a in range(game.actions[i]):
                    if a == b:
                        continue
                    rows.append(np.where(table[:, i] == a, diff, 0.0))
            else:
                rows.append(diff)
    return np.array(rows)


def _solve_correlated(game: MatrixGame, kind: EquilibriumKind) -> np.ndarray:
    J = game.num_joint
    A_ub = _deviation_rows(game, kind)
    welfare = game.payoffs.sum(axis=0)
    scale = max(1.0, float(np.max(np.abs(welfare))))
    # maximise welfare; a tiny index penalty breaks ties toward low joint indices
    c = -welfare + 1e-9 * scale * np.arange(J) / J
    res = linprog(
        c, A_ub=A_ub if len(A_ub) else None, b_ub=np.zeros(len(A_ub)) if len(A_ub) else None,
        A_eq=np.ones((1, J)), b_eq=[1.0], bounds=[(0, None)] * J,
        method="highs", options=LP_OPTIONS,
    )
    if res.status != 0:
        raise EquilibriumNotFound(f"{kind.value} LP failed: {res.message}")
    x = np.clip(res.x, 0.0, None)
    return x / x.sum()


def _constant_sum(game: MatrixGame) -> bool:
    if game.num_agents != 2:
        return False
    total = game.payoffs.sum(axis=0)
    scale = max(1.0, float(np.max(np.abs(game.payoffs))))
    return float(np.ptp(total)) <= 1e-12 * scale


def _maximin(U: np.ndarray) -> np.ndarray:
    """Row player's maximin mixed strategy for payoff matrix U (rows = own actions)."""
    n, k = U.shape
    # variables (x, v): maximise v s.t. x^T U[:, col] >= v
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-U.T, np.ones((k, 1))])
    A_eq = np.concatenate([np.ones(n), [0.0]])[None, :]
    res = linprog(
        c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=[1.0],
        bounds=[(0, None)] * n + [(None, None)], method="highs", options=LP_OPTIONS,
    )
    if res.status != 0:
        raise EquilibriumNotFound(f"maximin LP failed: {res.message}")
    x = np.clip(res.x[:n], 0.0, None)
    return x / x.sum()


def _indifference(U: np.ndarray, rows, cols):
    """Mixed strategy on ``cols`` making the row player indifferent across ``rows``."""
    k = len(cols)
    M = np.zeros((len(rows) + 1, k + 1))
    M[:-1, :k] = U[np.ix_(rows, cols)]
    M[:-1, k] = -1.0
    M[-1, :k] = 1.0
    rhs = np.zeros(len(rows) + 1)
    rhs[-1] = 1.0
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    if np.max(np.abs(M @ sol - rhs)) > 1e-10:
        return None
    y = sol[:k]
    if (y < -1e-12).any():
        return None
    return np.clip(y, 0.0, None)


def _bimatrix_support_enumeration(game: MatrixGame, tol: float) -> list[np.ndarray]:
    n0, n1 = game.actions
    U0 = game.payoffs[0].reshape(n0, n1)
    U1 = game.payoffs[1].reshape(n0, n1)
    pairs = [
        (I, Jc)
        for k0 in range(1, n0 + 1) for k1 in range(1, n1 + 1)
        for I in itertools.combinations(range(n0), k0)
        for Jc in itertools.combinations(range(n1), k1)
    ]
    pairs.sort(key=lambda p: (len(p[0]) + len(p[1]), abs(len(p[0]) - len(p[1]))))
    for I, Jc in pairs:
        y = _indifference(U0, I, Jc)
        if y is None:
            continue
        x = _indifference(U1.T, Jc, I)
        if x is None:
            continue
        xs = np.zeros(n0)
        xs[list(I)] = x
        ys = np.zeros(n1)
        ys[list(Jc)] = y
        if xs.sum() <= 0 or ys.sum() <= 0:
            continue
        margs = [xs / xs.sum(), ys / ys.sum()]
        if equilibrium_gap(game, product_policy(margs), EquilibriumKind.NASH) <= tol:
            return margs
    raise EquilibriumNotFound("support enumeration found no equilibrium")


def _multi_support_enumeration(game: MatrixGame, tol: float) -> list[np.ndarray]:
    m = game.num_agents
    acts = game.actions
    tensors = [u.reshape(acts) for u in game.payoffs]
    supports_per_agent = [
        [S for k in range(1, n + 1) for S in itertools.combinations(range(n), k)] for n in acts
    ]
    profiles = list(itertools.product(*supports_per_agent))
    profiles.sort(key=lambda p: sum(len(s) for s in p))

    def expand(z, prof):
        margs, pos = [], 0
        for i, S in enumerate(prof):
            x = np.zeros(acts[i])
            x[list(S)] = z[pos:pos + len(S)]
            margs.append(x)
            pos += len(S)
        return margs

    def own_payoffs(margs, i):
        t = tensors[i]
        for j in reversed(range(m)):
            if j != i:
                t = np.tensordot(t, margs[j], axes=([j], [0]))
        return t

    for prof in profiles:
        n_x = sum(len(S) for S in prof)
        if all(len(S) == 1 for S in prof):
            margs = [np.eye(acts[i])[S[0]] for i, S in enumerate(prof)]
            if equilibrium_gap(game, product_policy(margs), EquilibriumKind.NASH) <= tol:
                return margs
            continue

        def resid(z):
            margs = expand(z[:n_x], prof)
            out = []
            for i, S in enumerate(prof):
                pay = own_payoffs(margs, i)
                out.extend(pay[list(S)] - z[n_x + i])
                out.append(margs[i].sum() - 1.0)
            return np.array(out)

        for start in range(3):
            rng = np.random.default_rng(start)
            z0 = np.concatenate(
                [np.full(len(S), 1.0 / len(S)) if start == 0 else rng.dirichlet(np.ones(len(S)))
                 for S in prof] + [np.zeros(m)]
            )
            sol = least_squares(
                resid, z0, bounds=([0.0] * n_x + [-np.inf] * m, [1.0] * n_x + [np.inf] * m),
                xtol=1e-15, ftol=1e-15, gtol=1e-15,
            )
            margs = [x / x.sum() if x.sum() > 0 else x for x in expand(sol.x[:n_x], prof)]
            if any(x.sum() <= 0 for x in margs):
                continue
            if equilibrium_gap(game, product_policy(margs), EquilibriumKind.NASH) <= tol:
                return margs
    raise EquilibriumNotFound("no Nash equilibrium found within tolerance")


def nash_marginals(game: MatrixGame, tol: float = 1e-9) -> list[np.ndarray]:
    if game.num_agents == 1:
        return [np.eye(game.num_joint)[int(np.argmax(game.payoffs[0]))]]
    if _constant_sum(game):
        n0, n1 = game.actions
        U0 = game.payoffs[0].reshape(n0, n1)
        U1 = game.payoffs[1].reshape(n0, n1)
        return [_maximin(U0), _maximin(U1.T)]
    if game.num_joint > MAX_NASH_JOINT:
        raise UnsupportedEquilibrium(
            f"Nash equilibria are only computed for constant-sum two-player games or games "
            f"with at most {MAX_NASH_JOINT} joint actions (general Nash is PPAD-hard); "
            f"use CCE or CE instead"
        )
    if game.num_agents == 2:
        return _bimatrix_support_enumeration(game, tol)
    return _multi_support_enumeration(game, tol)


def solve_equilibrium(game: MatrixGame, kind=EquilibriumKind.CCE, tolerance: float = 1e-6) -> np.ndarray:
    """Equilibrium distribution over joint actions with gap at most ``tolerance``.

    Correlated kinds maximise total payoff over the equilibrium polytope.
    Nash output is the product of the agents' mixed strategies.
    """
    kind = EquilibriumKind(kind)
    if game.num_agents == 1:
        dist = np.zeros(game.num_joint)
        dist[int(np.argmax(game.payoffs[0]))] = 1.0
        return dist
    if kind is EquilibriumKind.NASH:
        dist = product_policy(nash_marginals(game, tolerance))
    else:
        dist = _solve_correlated(game, kind)
    gap = equilibrium_gap(game, dist, kind)
    if gap > tolerance:
        raise EquilibriumNotFound(f"{kind.value} solution has gap {gap:.3e} > {tolerance:.3e}")
    return dist
