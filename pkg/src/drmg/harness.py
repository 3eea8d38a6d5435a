"""Experiment orchestration: config-driven runs, the bandit baseline and seed sweeps."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .episodes import (  # noqa: F401  (re-exported)
    CSV_COLUMNS, RegretTrace, TraceRow, Transition, loglog_slope, read_trace_csv, simulate_episode,
)
from .equilibria import EquilibriumKind
from .game_core import GameSpec, validate_spec
from .io import load_json, load_spec, save_json
from .ronavi import LearnerConfig, run_online

CONFIG_KEYS = {
    "spec_path", "K", "delta", "divergence", "kind", "c1", "c2", "cf", "eta_floor", "seed",
    "score_every", "score_kinds", "record_time",
}


def run_bandit_baseline(spec: GameSpec, K: int, rng: np.random.Generator) -> RegretTrace:
    """UCB1 over joint arms of a horizon-1 Bernoulli instance.

    Rewards are agent 0's draws; each row records the pseudo-regret of the
    pulled arm against the best mean.
    """
    if not (spec.bernoulli and spec.horizon == 1 and spec.num_states == 1):
        raise ValueError("bandit baseline needs a single-state, horizon-1 Bernoulli instance")
    if K < 1:
        raise ValueError("K must be >= 1")
    means = spec.rewards[0, 0, 0]
    J = means.size
    best = means.max()
    pulls = np.zeros(J)
    sums = np.zeros(J)
    trace = RegretTrace(kinds=(), primary=EquilibriumKind.NASH)
    draws = rng.random(K)
    for t in range(K):
        if t < J:
            arm = t
        else:
            ucb = sums / pulls + np.sqrt(2.0 * math.log(t + 1) / pulls)
            arm = int(np.argmax(ucb))
        pulls[arm] += 1
        sums[arm] += float(draws[t] < means[arm])
        trace.append(TraceRow(k=t + 1, s1=0, max_gap=float(best - means[arm])))
    return trace


@dataclass
class ExperimentConfig:
    spec_path: str
    K: int
    delta: float = 0.05
    divergence: str | None = None
    kind: str = "CCE"
    c1: float = 1.0
    c2: float = 1.0
    cf: float = 1.0
    eta_floor: float | None = None
    seed: int = 0
    score_every: int = 1
    score_kinds: list[str] | None = None
    record_time: bool = False
    base_dir: Path = field(default=Path("."), repr=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | str = ".") -> "ExperimentConfig":
        unknown = set(d) - CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "spec_path" not in d or "K" not in d:
            raise ValueError("config needs spec_path and K")
        return cls(**d, base_dir=Path(base_dir))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(load_json(path), Path(path).parent)

    @property
    def resolved_spec_path(self) -> Path:
        p = Path(self.spec_path)
        return p if p.is_absolute() else self.base_dir / p

    def learner(self) -> LearnerConfig:
        return LearnerConfig(
            episodes=int(self.K), delta=self.delta, kind=self.kind.upper(), c1=self.c1, c2=self.c2,
            cf=self.cf, eta_floor=self.eta_floor, seed=self.seed, score_every=self.score_every,
            score_kinds=tuple(k.upper() for k in self.score_kinds) if self.score_kinds else None,
        )


def load_experiment_spec(cfg: ExperimentConfig) -> GameSpec:
    path = cfg.resolved_spec_path
    if not path.is_file():
        raise FileNotFoundError(f"spec file not found: {path}")
    spec = load_spec(path)
    if cfg.divergence:
        spec = spec.with_divergence(cfg.divergence.upper())
    report = validate_spec(spec)
    if not report.ok:
        raise ValueError(f"invalid spec {path}:\n{report}")
    return spec


def summarize(trace: RegretTrace, K: int, runtime_s: float) -> dict[str, Any]:
    slope = loglog_slope(trace.episodes, trace.cumulative)
    return {
        "K": K,
        "scored_episodes": len(trace),
        "loglog_slope": None if math.isnan(slope) else slope,
        "final_cum_regret": float(trace.cumulative[-1]) if len(trace) else 0.0,
        "final_avg_gap": trace.average_gap() if len(trace) else None,
        "certified_index": trace.certified_index(),
        "certified_gap": float(trace.gaps.min()) if len(trace) else None,
        "runtime_s": runtime_s,
    }


def run_experiment(config, out_csv, summary_path=None) -> dict[str, Any]:
    """Run one configured experiment; writes the trace CSV and a summary JSON.

    ``summary_path`` defaults to the CSV path with a ``.summary.json`` suffix.
    """
    cfg = config if isinstance(config, ExperimentConfig) else (
        ExperimentConfig.from_dict(config) if isinstance(config, dict) else ExperimentConfig.load(config)
    )
    spec = load_experiment_spec(cfg)
    t0 = time.perf_counter()
    result = run_online(spec, cfg.learner(), keep_policies=False)
    runtime = time.perf_counter() - t0
    out_csv = Path(out_csv)
    try:
        result.trace.write_csv(out_csv, record_time=cfg.record_time)
    except OSError as exc:
        raise OSError(f"cannot write trace to {out_csv}: {exc}") from exc
    summary = summarize(result.trace, int(cfg.K), runtime)
    summary_path = Path(summary_path) if summary_path else out_csv.with_suffix(".summary.json")
    save_json(summary, summary_path)
    return summary


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get("DRMG_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    n = cap if requested is None else min(requested, cap)
    return max(1, n)


def _sweep_job(args):
    cfg_dict, base_dir, out_csv = args
    return run_experiment(ExperimentConfig.from_dict(cfg_dict, base_dir), out_csv)


def sweep(config, seeds, out_dir, workers: int | None = None) -> list[dict[str, Any]]:
    """Run one config over several seeds, each in its own process; returns summaries in seed order."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.load(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = {k: getattr(cfg, k) for k in CONFIG_KEYS}
    jobs = []
    for seed in seeds:
        d = dict(base, seed=int(seed), spec_path=str(cfg.resolved_spec_path.resolve()))
        jobs.append((d, ".", str(out_dir / f"trace_seed{seed}.csv")))
    n = worker_count(workers)
    if n == 1:
        return [_sweep_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_sweep_job, jobs))
