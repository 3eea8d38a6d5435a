"""JSON formats for game specs, matrix games, support queries and experiment configs."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .equilibria import MatrixGame
from .game_core import Divergence, GameSpec, joint_size
from .robust_dual import SupportQuery


class SpecFormatError(ValueError):
    pass


def _read_json(path) -> Any:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SpecFormatError(f"{p}: invalid JSON ({exc})") from exc


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def _override_entries(spec: GameSpec) -> list[dict]:
    """Override cells that differ from the base radius, as {agent, h, s, a, sigma} records."""
    out = []
    base = spec.radii.reshape(-1, 1, 1, 1)
    diff = np.argwhere(spec.sigma != np.broadcast_to(base, spec.sigma.shape))
    for i, h, s, a in diff:
        out.append({"agent": int(i), "h": int(h), "s": int(s), "a": int(a),
                    "sigma": float(spec.sigma[i, h, s, a])})
    return out


def spec_to_dict(spec: GameSpec) -> dict:
    radii: Any = [float(r) for r in spec.radii]
    overrides = _override_entries(spec)
    if overrides:
        radii = {"base": radii, "overrides": overrides}
    return {
        "name": spec.name,
        "num_agents": spec.num_agents,
        "num_states": spec.num_states,
        "actions": list(spec.actions),
        "horizon": spec.horizon,
        "divergence": spec.divergence.value,
        "radii": radii,
        "rewards": spec.rewards.tolist(),
        "kernel": spec.kernel.tolist(),
        "fail_states": list(spec.fail_states),
        "bernoulli": spec.bernoulli,
        "initial_state": spec.initial_state,
    }


def _parse_radii(raw, m: int, H: int, S: int, J: int):
    """Accepts a per-agent list, a bare list of override records (base 0), or {base, overrides}."""
    if isinstance(raw, (int, float)):
        return np.full(m, float(raw)), None
    if isinstance(raw, list) and all(isinstance(x, (int, float)) for x in raw):
        return np.array(raw, dtype=float), None
    if isinstance(raw, list):
        base, records = np.zeros(m), raw
    elif isinstance(raw, dict):
        b = raw.get("base", 0.0)
        base = np.full(m, float(b)) if isinstance(b, (int, float)) else np.array(b, dtype=float)
        records = raw.get("overrides", [])
    else:
        raise SpecFormatError(f"cannot parse radii: {raw!r}")
    table = np.full((m, H, S, J), np.nan)
    for rec in records:
        try:
            h, s, a, sig = int(rec["h"]), int(rec["s"]), int(rec["a"]), float(rec["sigma"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecFormatError(f"bad radius override {rec!r}") from exc
        agents = [int(rec["agent"])] if "agent" in rec else range(m)
        for i in agents:
            table[i, h, s, a] = sig
    return base, table


def spec_from_dict(d: dict) -> GameSpec:
    try:
        actions = tuple(int(a) for a in d["actions"])
        H = int(d["horizon"])
        rewards = np.array(d["rewards"], dtype=float)
        kernel = np.array(d["kernel"], dtype=float)
    except KeyError as exc:
        raise SpecFormatError(f"missing key {exc.args[0]!r}") from exc
    m, J = len(actions), joint_size(actions)
    S = int(d.get("num_states", kernel.shape[1] if kernel.ndim == 4 else 0))
    if "num_agents" in d and int(d["num_agents"]) != m:
        raise SpecFormatError(f"num_agents={d['num_agents']} but {m} action counts given")
    base, override = _parse_radii(d.get("radii", 0.0), m, H, S, J)
    return GameSpec(
        actions=actions, horizon=H, rewards=rewards, kernel=kernel, radii=base,
        divergence=Divergence(d.get("divergence", "TV")),
        fail_states=tuple(d.get("fail_states", ())),
        radius_override=override,
        bernoulli=bool(d.get("bernoulli", False)),
        initial_state=d.get("initial_state"),
        name=d.get("name", ""),
    )


def load_spec(path) -> GameSpec:
    return spec_from_dict(_read_json(path))


def save_spec(spec: GameSpec, path) -> None:
    _write_json(spec_to_dict(spec), path)


def load_matrix_game(path) -> MatrixGame:
    """{"actions": [...], "payoffs": [[agent 0 over joints], ...]}"""
    d = _read_json(path)
    return MatrixGame(np.array(d["payoffs"], dtype=float), tuple(d["actions"]))


def save_matrix_game(game: MatrixGame, path) -> None:
    _write_json({"actions": list(game.actions), "payoffs": game.payoffs.tolist()}, path)


def load_query(path) -> SupportQuery:
    """{"values", "center", "radius", "divergence"} plus optional horizon, assume_zero_min, eta_floor."""
    d = _read_json(path)
    return SupportQuery(
        values=d["values"], center=d["center"], radius=float(d["radius"]),
        divergence=d.get("divergence", "TV"), horizon=d.get("horizon"),
        assume_zero_min=bool(d.get("assume_zero_min", False)), eta_floor=d.get("eta_floor"),
    )


def load_json(path) -> Any:
    return _read_json(path)


def save_json(obj, path) -> None:
    _write_json(obj, path)
