"""Command-line entry point: ``drmg {gen,run,eval,oracle,sweep}``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .equilibria import EquilibriumKind, deviation_gains, solve_equilibrium
from .game_core import (
    build_corrupted_bandit, build_initial_shock, build_random_game, validate_spec,
)
from .io import load_matrix_game, load_query, load_spec, save_json, save_spec
from .robust_dual import brute_force_support, support
from .robust_planning import exact_robust_vi


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def cmd_gen(args) -> int:
    if args.kind == "initial-shock":
        secret = _ints(args.secret) if args.secret else [args.actions - 1] * args.agents
        spec = build_initial_shock(args.agents, args.actions, args.horizon, args.sigma, secret,
                                   fail_state=not args.no_fail_state)
    elif args.kind == "corrupted-bandit":
        acts = _ints(args.action_list) if args.action_list else [args.actions] * args.agents
        secret = _ints(args.secret) if args.secret else [0] * len(acts)
        spec = build_corrupted_bandit(acts, args.epsilon, args.sigma, secret)
    else:
        acts = _ints(args.action_list) if args.action_list else [args.actions] * args.agents
        radii = _floats(args.radii) if args.radii else [args.sigma] * len(acts)
        spec = build_random_game(len(acts), args.states, acts, args.horizon, radii,
                                 args.divergence.upper(), args.seed)
    report = validate_spec(spec)
    if not report.ok:
        print(report, file=sys.stderr)
        return 1
    save_spec(spec, args.out)
    print(f"wrote {args.out}: m={spec.num_agents} S={spec.num_states} A={list(spec.actions)} "
          f"H={spec.horizon} divergence={spec.divergence.value}")
    return 0


def cmd_run(args) -> int:
    from .harness import run_experiment

    summary = run_experiment(args.config, args.out, args.summary)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_eval(args) -> int:
    game = load_matrix_game(args.game)
    kind = EquilibriumKind(args.kind.upper())
    dist = solve_equilibrium(game, kind, args.tolerance)
    gains = deviation_gains(game, dist, kind)
    print(json.dumps({"kind": kind.value, "distribution": dist.tolist(),
                      "deviation_gains": gains.tolist(), "gap": max(float(gains.max()), 0.0)}, indent=2))
    return 0


def cmd_oracle(args) -> int:
    if args.query:
        q = load_query(args.query)
        res = support(q)
        out = {"value": res.value, "eta": res.eta}
        if q.values.size <= 6:
            ref = brute_force_support(q, args.resolution)
            out.update(oracle=ref, abs_diff=abs(ref - res.value))
        print(json.dumps(out, indent=2))
        return 0
    if not args.spec:
        print("oracle needs --query or --spec", file=sys.stderr)
        return 2
    spec = load_spec(args.spec)
    sol = exact_robust_vi(spec, args.kind.upper())
    payload = {"kind": args.kind.upper(), "V": sol.V.tolist(), "Q": sol.Q.tolist(),
               "policy": sol.policy.dist.tolist()}
    if args.out:
        save_json(payload, args.out)
        print(f"wrote {args.out}")
    else:
        print(json.dumps({"V0": sol.V[:, 0].tolist()}, indent=2))
    return 0


def cmd_sweep(args) -> int:
    from .harness import sweep

    seeds = range(args.seeds) if args.seed_list is None else _ints(args.seed_list)
    summaries = sweep(args.config, seeds, args.out_dir, args.workers)
    slopes = [s["loglog_slope"] for s in summaries if s["loglog_slope"] is not None]
    print(json.dumps({"runs": len(summaries),
                      "median_slope": float(np.median(slopes)) if slopes else None,
                      "summaries": summaries}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drmg", description="Distributionally robust Markov game toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a game spec JSON")
    g.add_argument("--kind", choices=["initial-shock", "corrupted-bandit", "random"], required=True)
    g.add_argument("--agents", type=int, default=2)
    g.add_argument("--actions", type=int, default=2, help="actions per agent (uniform)")
    g.add_argument("--action-list", help="comma-separated actions per agent")
    g.add_argument("--states", type=int, default=3)
    g.add_argument("--horizon", type=int, default=3)
    g.add_argument("--sigma", type=float, default=0.2)
    g.add_argument("--radii", help="comma-separated per-agent radii (random games)")
    g.add_argument("--divergence", choices=["tv", "kl", "TV", "KL"], default="TV")
    g.add_argument("--epsilon", type=float, default=0.1)
    g.add_argument("--secret", help="comma-separated per-agent secret actions")
    g.add_argument("--no-fail-state", action="store_true",
                   help="omit the absorbing fail state (initial-shock); the result fails TV validation")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run the online learner from a config JSON")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True, help="trace CSV path")
    r.add_argument("--summary", help="summary JSON path (default: <out>.summary.json)")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="solve a one-shot matrix game")
    e.add_argument("--game", required=True)
    e.add_argument("--kind", default="cce")
    e.add_argument("--tolerance", type=float, default=1e-6)
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("oracle", help="support-function query or exact robust equilibrium values")
    o.add_argument("--query")
    o.add_argument("--resolution", type=float, default=1e-3)
    o.add_argument("--spec")
    o.add_argument("--kind", default="cce")
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("sweep", help="run a config over many seeds in parallel (DRMG_THREADS caps workers)")
    s.add_argument("--config", required=True)
    s.add_argument("--seeds", type=int, default=4)
    s.add_argument("--seed-list")
    s.add_argument("--workers", type=int)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, OSError) as exc:
        print(f"drmg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
