"""Episode simulation in the nominal environment and per-episode regret records."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .equilibria import EquilibriumKind
from .game_core import GameSpec, JointPolicy

CSV_COLUMNS = ("k", "s1", "gap_nash", "gap_cce", "gap_ce", "max_gap", "cum_regret", "t_ms")
FLOAT_FMT = "%.12e"


class Transition(NamedTuple):
    h: int
    s: int
    a: int
    r: np.ndarray       # per-agent reward
    s_next: int


def simulate_episode(
    spec: GameSpec, policy: JointPolicy, s1: int, rng: np.random.Generator
) -> list[Transition]:
    """Roll out ``policy`` for H steps under the nominal kernel.

    Joint actions are drawn from the policy row and next states from the
    nominal row. Rewards are the mean table, or one Bernoulli draw per agent
    for bandit instances.
    """
    if not 0 <= s1 < spec.num_states:
        raise ValueError(f"initial state {s1} out of range")
    out = []
    s = s1
    for h in range(spec.horizon):
        a = int(rng.choice(spec.num_joint, p=policy.dist[h, s]))
        mean = spec.rewards[:, h, s, a]
        r = (rng.random(spec.num_agents) < mean).astype(float) if spec.bernoulli else mean.copy()
        s2 = int(rng.choice(spec.num_states, p=spec.kernel[h, s, a]))
        out.append(Transition(h, s, a, r, s2))
        s = s2
    return out


@dataclass
class TraceRow:
    k: int
    s1: int
    gaps: dict = field(default_factory=dict)   # kind -> per-agent gaps (clipped)
    max_gap: float | None = None
    cum_regret: float = 0.0
    t_ms: float = 0.0
    visits: int = 0

    def kind_gap(self, kind) -> float | None:
        g = self.gaps.get(EquilibriumKind(kind))
        return None if g is None else float(np.max(g))


@dataclass
class RegretTrace:
    """Scored episodes in order; cum_regret is the running sum of max_gap."""

    kinds: tuple = (EquilibriumKind.CCE,)
    primary: EquilibriumKind = EquilibriumKind.CCE
    rows: list[TraceRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, row: TraceRow) -> TraceRow:
        if row.max_gap is None:
            row.max_gap = row.kind_gap(self.primary)
        if row.max_gap < 0:
            raise ValueError("gaps must be clipped at zero")
        prev = self.rows[-1].cum_regret if self.rows else 0.0
        row.cum_regret = prev + row.max_gap
        self.rows.append(row)
        return row

    @property
    def episodes(self) -> np.ndarray:
        return np.array([r.k for r in self.rows])

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r.max_gap for r in self.rows])

    @property
    def cumulative(self) -> np.ndarray:
        return np.array([r.cum_regret for r in self.rows])

    def certified_index(self) -> int | None:
        """Episode index (0-based) of the smallest measured gap, earliest on ties."""
        if not self.rows:
            return None
        return self.rows[int(np.argmin(self.gaps))].k - 1

    def average_gap(self, upto: int | None = None) -> float:
        """Cumulative regret divided by the number of scored episodes up to episode ``upto``."""
        rows = self.rows if upto is None else [r for r in self.rows if r.k <= upto]
        if not rows:
            return math.nan
        return rows[-1].cum_regret / len(rows)

    def write_csv(self, path, record_time: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                cells = [str(r.k), str(r.s1)]
                for kind in (EquilibriumKind.NASH, EquilibriumKind.CCE, EquilibriumKind.CE):
                    g = r.kind_gap(kind)
                    cells.append("" if g is None else FLOAT_FMT % g)
                cells += [FLOAT_FMT % r.max_gap, FLOAT_FMT % r.cum_regret]
                cells.append(FLOAT_FMT % r.t_ms if record_time else "")
                w.writerow(cells)


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {k: (float(v) if v not in ("",) and k not in ("k", "s1") else (int(v) if v else None))
             for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def loglog_slope(episodes: Sequence[int], cumulative: Sequence[float], start_frac: float = 0.01,
                 num_points: int = 50) -> float:
    """Least-squares slope of log(cumulative regret) against log(k).

    Uses ``num_points`` log-spaced episodes in [max(2, start_frac * K), K]
    with positive cumulative regret.
    """
    k = np.asarray(episodes, dtype=float)
    c = np.asarray(cumulative, dtype=float)
    if len(k) < 2:
        return math.nan
    K = k[-1]
    lo = max(2.0, start_frac * K)
    targets = np.unique(np.geomspace(lo, K, num_points).round())
    idx = np.unique(np.clip(np.searchsorted(k, targets), 0, len(k) - 1))
    idx = idx[c[idx] > 0]
    if len(idx) < 2:
        return math.nan
    return float(np.polyfit(np.log(k[idx]), np.log(c[idx]), 1)[0])
