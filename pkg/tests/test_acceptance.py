"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

Run alone with ``pytest -v tests/test_acceptance.py`` (about 5 minutes, dominated
by the two 2000-episode regret runs) or as a script:
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import time

import numpy as np
import pytest

from drmg.episodes import loglog_slope
from drmg.equilibria import EquilibriumKind, MatrixGame, equilibrium_gap, solve_equilibrium
from drmg.game_core import (
    Divergence, JointPolicy, build_corrupted_bandit, build_initial_shock, build_random_game,
    reference_game,
)
from drmg.harness import run_bandit_baseline, run_experiment
from drmg.io import save_spec
from drmg.robust_dual import SupportQuery, brute_force_support, kl_support, tv_support
from drmg.robust_planning import (
    exact_robust_vi, regret_gap, robust_best_response, robust_policy_eval,
)
from drmg.ronavi import LearnerConfig, run_online

K = EquilibriumKind
H_QUERY = 3.0


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {number:2d}: {'PASS' if ok else 'FAIL'} | {detail}")
    return emit


def random_policy(spec, rng):
    return JointPolicy(rng.dirichlet(np.ones(spec.num_joint), (spec.horizon, spec.num_states)), spec.actions)


# 1 -------------------------------------------------------------------------

def test_c01_tv_dual_matches_lp(report):
    rng = np.random.default_rng(1)
    queries = []
    for _ in range(200):
        S = int(rng.integers(2, 7))
        queries.append(SupportQuery(rng.uniform(0, H_QUERY, S), rng.dirichlet(np.ones(S)),
                                    float(rng.uniform(0, 1)), "TV", horizon=H_QUERY))
    t0 = time.perf_counter()
    duals = [tv_support(q).value for q in queries]
    dual_time = time.perf_counter() - t0
    t0 = time.perf_counter()
    primals = [brute_force_support(q) for q in queries]
    lp_time = time.perf_counter() - t0
    err = float(np.max(np.abs(np.array(duals) - np.array(primals))))
    ok = err <= 1e-8 and dual_time + lp_time < 1.0
    report(1, ok, f"max |dual - LP| = {err:.2e} (tol 1e-8); time dual {dual_time:.3f}s + LP {lp_time:.3f}s (< 1 s)")
    assert ok


# 2 -------------------------------------------------------------------------

def test_c02_kl_dual_matches_grid(report):
    rng = np.random.default_rng(2)
    queries = []
    while len(queries) < 100:
        P = rng.dirichlet(np.ones(3))
        if P.min() < 0.05:
            continue  # bounded-away-from-zero nominal rows
        queries.append(SupportQuery(rng.uniform(0, H_QUERY, 3), P, float(rng.uniform(0.01, 1.0)), "KL",
                                    horizon=H_QUERY))
    t0 = time.perf_counter()
    err = max(abs(kl_support(q).value - brute_force_support(q, 1e-3)) for q in queries)
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-4 and elapsed < 30.0
    report(2, ok, f"max |dual - grid| = {err:.2e} (tol 1e-4); {elapsed:.2f}s (< 30 s)")
    assert ok


# 3 -------------------------------------------------------------------------

def _plain_eval(spec, policy, i):
    H, S = spec.horizon, spec.num_states
    V = np.zeros((H + 1, S))
    for h in reversed(range(H)):
        for s in range(S):
            q = [spec.rewards[i, h, s, a] + spec.kernel[h, s, a] @ V[h + 1] for a in range(spec.num_joint)]
            V[h, s] = policy.dist[h, s] @ np.array(q)
    return V


def _plain_vi(spec, kind):
    m, H, S = spec.num_agents, spec.horizon, spec.num_states
    V = np.zeros((m, H + 1, S))
    for h in reversed(range(H)):
        for s in range(S):
            Q = np.array([[spec.rewards[i, h, s, a] + spec.kernel[h, s, a] @ V[i, h + 1]
                           for a in range(spec.num_joint)] for i in range(m)])
            dist = solve_equilibrium(MatrixGame(Q, spec.actions), kind, 1e-8)
            V[:, h, s] = Q @ dist
    return V


def test_c03_zero_radius_reduction(report):
    rng = np.random.default_rng(3)
    worst = 0.0
    for seed in range(20):
        div = Divergence.TV if seed % 2 == 0 else Divergence.KL
        spec = build_random_game(2, 4, (2, 2), 3, 0.0, div, seed)
        pol = random_policy(spec, rng)
        for i in range(2):
            worst = max(worst, np.max(np.abs(robust_policy_eval(spec, pol, i).V - _plain_eval(spec, pol, i))))
        worst = max(worst, np.max(np.abs(exact_robust_vi(spec, K.CCE).V - _plain_vi(spec, K.CCE))))
    ok = worst <= 1e-10
    report(3, ok, f"max deviation from non-robust DP over 20 games = {worst:.2e} (tol 1e-10)")
    assert ok


# 4 -------------------------------------------------------------------------

def test_c04_equilibrium_gaps(report):
    rng = np.random.default_rng(4)
    shapes = [(2, 2), (3, 3), (2, 3), (3, 2), (2, 2, 2), (3, 3, 3), (3, 3, 2), (2, 2, 3), (4, 4), (5, 5)]
    worst = {K.CCE: 0.0, K.CE: 0.0}
    for g in range(100):
        actions = shapes[g % len(shapes)]
        game = MatrixGame(rng.uniform(-1, 1, (len(actions), int(np.prod(actions)))), actions)
        for kind in worst:
            worst[kind] = max(worst[kind], equilibrium_gap(game, solve_equilibrium(game, kind), kind))
    pennies = MatrixGame(np.array([[1, -1, -1, 1], [-1, 1, 1, -1]], float), (2, 2))
    nash = solve_equilibrium(pennies, K.NASH).reshape(2, 2)
    marg_err = max(np.max(np.abs(nash.sum(axis=1) - 0.5)), np.max(np.abs(nash.sum(axis=0) - 0.5)))
    ok = max(worst.values()) <= 1e-6 and marg_err <= 1e-9
    report(4, ok, f"max CCE gap {worst[K.CCE]:.1e}, max CE gap {worst[K.CE]:.1e} (tol 1e-6); "
                  f"pennies marginal error {marg_err:.1e} (tol 1e-9)")
    assert ok


# 5 -------------------------------------------------------------------------

def test_c05_value_span_bound(report):
    rng = np.random.default_rng(5)
    worst_excess = -np.inf
    for seed in range(50):
        radii = rng.uniform(0.05, 1.0, 2)
        spec = build_random_game(2, 3, (2, 2), 4, radii, Divergence.TV, seed)
        policies = [random_policy(spec, rng), JointPolicy.uniform(spec), exact_robust_vi(spec).policy]
        for pol in policies:
            for i in range(2):
                tables = [robust_policy_eval(spec, pol, i).V, robust_best_response(spec, pol, i).V]
                for V in tables:
                    for h in range(spec.horizon):
                        bound = min(1.0 / radii[i], spec.horizon - h)
                        worst_excess = max(worst_excess, V[h].max() - V[h].min() - bound)
    ok = worst_excess <= 1e-9
    report(5, ok, f"max (span - bound) over 50 TV games = {worst_excess:.3e} (must be <= 1e-9)")
    assert ok


# 6 -------------------------------------------------------------------------

def test_c06_optimism_sandwich(report):
    cells = violations = 0
    runs_clean = 0
    for seed in range(50):
        div = Divergence.TV if seed % 2 == 0 else Divergence.KL
        spec = build_random_game(2, 3, (2, 2), 3, 0.2, Divergence.TV, 100 + seed).with_divergence(div)
        bad_here = 0

        def check(k, policy, bounds, store):
            nonlocal cells, violations, bad_here
            for i in range(spec.num_agents):
                q_pi = robust_policy_eval(spec, policy, i).Q
                q_dev = robust_best_response(spec, policy, i).Q
                bad = (bounds.Ql[i] > q_pi + 1e-9) | (q_dev > bounds.Qu[i] + 1e-9)
                cells += bad.size
                violations += int(bad.sum())
                bad_here += int(bad.sum())

        run_online(spec, LearnerConfig(30, delta=0.05, seed=seed, score_every=0), on_episode=check)
        runs_clean += bad_here == 0
    frac = violations / cells
    ok = frac <= 0.05
    report(6, ok, f"violating cells {violations}/{cells} = {frac:.4f} (<= 0.05); "
                  f"{runs_clean}/50 runs without any violation")
    assert ok


# 7 -------------------------------------------------------------------------

@pytest.mark.parametrize("divergence", ["TV", "KL"])
def test_c07_sublinear_regret(report, divergence):
    spec = reference_game(divergence)
    cfg = LearnerConfig(2000, delta=0.05, c1=0.1, c2=0.1, cf=0.1, seed=0)
    t0 = time.perf_counter()
    trace = run_online(spec, cfg, keep_policies=False).trace
    elapsed = time.perf_counter() - t0
    from drmg.episodes import loglog_slope
    slope = loglog_slope(trace.episodes, trace.cumulative)
    avg200, avg2000 = trace.average_gap(200), trace.average_gap(2000)
    ratio = avg2000 / avg200 if avg200 > 0 else 0.0
    ok = 0 < slope < 0.9 and ratio < 0.5 and elapsed < 600
    report(7, ok, f"{divergence}: slope {slope:.3f} (in (0, 0.9)); avg gap K=200 {avg200:.4f}, "
                  f"K=2000 {avg2000:.4f}, ratio {ratio:.3f} (< 0.5); {elapsed:.0f}s (< 600 s)")
    assert ok


# 8 -------------------------------------------------------------------------

def test_c08_initial_shock_closed_form(report):
    H, sigma = 6, 0.3
    spec = build_initial_shock(2, 2, H, sigma, (1, 1))
    measured = regret_gap(spec, JointPolicy.uniform(spec), 0, K.NASH)
    C = H - 1

    def wasted(p):
        return (1 - p) / p * (1 - (1 - p) ** C)

    # deviator knows its own half of the secret: p = 1/2; on-policy both guess: p = 1/4
    expected = sigma * (wasted(1 / 4) - wasted(1 / 2))
    err = abs(measured - expected)
    ok = err <= 1e-8
    report(8, ok, f"measured gap {measured:.12f}, closed form {expected:.12f}, error {err:.1e} (tol 1e-8)")
    assert ok


# 9 -------------------------------------------------------------------------

def test_c09_bandit_regret_grows_with_arms(report):
    medians = {}
    for M, actions in ((4, (2, 2)), (9, (3, 3)), (16, (4, 4))):
        finals = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            secret = int(rng.integers(M))
            spec = build_corrupted_bandit(actions, 0.1, 0.1, secret)
            finals.append(run_bandit_baseline(spec, 10_000, rng).cumulative[-1])
        medians[M] = float(np.median(finals))
    vals = [medians[4], medians[9], medians[16]]
    ok = vals[0] < vals[1] < vals[2]
    report(9, ok, "median regret at K=1e4: " + ", ".join(f"M={M}: {v:.1f}" for M, v in medians.items())
                  + " (must increase)")
    assert ok


# 10 ------------------------------------------------------------------------

def test_c10_byte_identical_trace(report, tmp_path):
    spec_path = tmp_path / "ref.json"
    save_spec(reference_game("TV"), spec_path)
    cfg = {"spec_path": str(spec_path), "K": 25, "c1": 0.1, "c2": 0.1, "cf": 0.1, "seed": 11,
           "score_kinds": ["CCE", "CE"]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    run_experiment(tmp_path / "cfg.json", tmp_path / "a.csv")
    run_experiment(tmp_path / "cfg.json", tmp_path / "b.csv")
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    ok = a == b and len(a) > 0
    report(10, ok, f"two runs, {len(a)} bytes each, identical: {a == b}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
