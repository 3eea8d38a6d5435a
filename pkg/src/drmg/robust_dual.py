"""Worst-case expectations over TV and KL balls around a nominal distribution.

The support function ``inf_{Q in U} E_Q[V]`` is evaluated through its scalar
dual. Every routine has a batched form operating on the trailing axis, which
is what the planners call; the scalar :class:`SupportQuery` API wraps it.

TV ball:  {Q : (1/2) ||Q - P||_1 <= sigma}
KL ball:  {Q : KL(Q || P) <= sigma}
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from .game_core import Divergence

PROB_TOL = 1e-9
VALUE_TOL = 1e-9
GOLDEN_TOL = 1e-10
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class SupportResult(NamedTuple):
    value: float
    eta: float


@dataclass(frozen=True)
class SupportQuery:
    values: np.ndarray
    center: np.ndarray
    radius: float
    divergence: Divergence = Divergence.TV
    horizon: float | None = None
    assume_zero_min: bool = False
    eta_floor: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "divergence", Divergence(self.divergence))

    @property
    def upper(self) -> float:
        if self.horizon is not None:
            return float(self.horizon)
        return max(float(self.values.max()), 1.0)

    def check(self) -> None:
        V, P = self.values, self.center
        if V.ndim != 1 or V.shape != P.shape:
            raise ValueError(f"values {V.shape} and center {P.shape} must be matching vectors")
        _check_center(P)
        _check_values(V, self.upper)
        if not self.radius >= 0:
            raise ValueError(f"radius must be non-negative, got {self.radius}")


def _check_center(P: np.ndarray) -> None:
    if (P < -PROB_TOL).any() or np.any(np.abs(P.sum(axis=-1) - 1.0) > PROB_TOL):
        raise ValueError("center is not a probability vector")


def _check_values(V: np.ndarray, upper) -> None:
    if (V < -VALUE_TOL).any() or np.any(V > np.asarray(upper)[..., None] + VALUE_TOL):
        raise ValueError("values must lie in [0, H]")


# ---------------------------------------------------------------------------
# TV
# ---------------------------------------------------------------------------

def tv_objective(eta, V, P, sigma, vmin):
    """eta - E_P[(eta - V)_+] - sigma * (eta - vmin)_+, broadcasting over eta's last axis."""
    eta = np.asarray(eta, dtype=float)
    hinge = np.maximum(eta[..., :, None] - V[..., None, :], 0.0)
    return (
        eta
        - np.einsum("...cs,...s->...c", hinge, P)
        - sigma[..., None] * np.maximum(eta - vmin[..., None], 0.0)
    )


def tv_support_batch(V, P, sigma, assume_zero_min=False, upper=None):
    """Exact TV support values and maximising dual variables.

    V, P: (..., S); sigma and upper broadcast against the leading axes.
    The dual objective is concave and piecewise linear in eta with kinks only
    at the entries of V, at vmin and at the interval ends, so its maximum
    over [0, H] is attained on that finite set.
    Returns ``(values, etas)`` with the smallest maximiser on ties.
    """
    P = np.asarray(P, dtype=float)
    V = np.broadcast_to(np.asarray(V, dtype=float), P.shape)
    lead = P.shape[:-1]
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), lead)
    if upper is None:
        upper = np.maximum(V.max(axis=-1), 0.0)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), lead)
    vmin = np.zeros(lead) if assume_zero_min else V.min(axis=-1)

    cands = np.concatenate(
        [V, np.zeros(lead + (1,)), upper[..., None], vmin[..., None]], axis=-1
    )
    cands = np.sort(np.clip(cands, 0.0, upper[..., None]), axis=-1)
    obj = tv_objective(cands, V, P, sigma, vmin)
    best = np.argmax(obj, axis=-1)[..., None]
    return (
        np.take_along_axis(obj, best, axis=-1)[..., 0],
        np.take_along_axis(cands, best, axis=-1)[..., 0],
    )


def tv_support(q: SupportQuery) -> SupportResult:
    if q.divergence is not Divergence.TV:
        raise ValueError("tv_support needs a TV query")
    q.check()
    val, eta = tv_support_batch(q.values, q.center, q.radius, q.assume_zero_min, q.upper)
    return SupportResult(float(val), float(eta))


# ---------------------------------------------------------------------------
# KL
# ---------------------------------------------------------------------------

def _kl_parts(V, P):
    support = P > 0
    vmin = np.where(support, V, np.inf).min(axis=-1)
    gap = np.where(support, V - vmin[..., None], 0.0)
    return vmin, gap


def kl_objective(eta, V, P, sigma):
    """-eta log E_P[exp(-V/eta)] - eta*sigma, evaluated with the shift by min V over supp(P)."""
    vmin, gap = _kl_parts(V, P)
    eta = np.asarray(eta, dtype=float)
    return _kl_shifted(eta, vmin, gap, P, sigma)


def _kl_shifted(eta, vmin, gap, P, sigma):
    # eta may carry one extra trailing axis of candidates
    if eta.ndim == vmin.ndim + 1:
        inner = np.einsum("...s,...cs->...c", P, np.exp(-gap[..., None, :] / eta[..., :, None]))
        return vmin[..., None] - eta * np.log(inner) - eta * sigma[..., None]
    inner = np.einsum("...s,...s->...", P, np.exp(-gap / eta[..., None]))
    return vmin - eta * np.log(inner) - eta * sigma


def kl_support_batch(V, P, sigma, upper, eta_floor=None, tol=GOLDEN_TOL):
    """KL support values and maximisers for rows with sigma > 0.

    Golden-section search on [eta_floor, upper / sigma] (the objective is
    concave in eta), plus the two endpoints and the eta -> 0+ limit, which
    equals min V over the support of P and is reported with eta = 0.
    """
    P = np.asarray(P, dtype=float)
    V = np.broadcast_to(np.asarray(V, dtype=float), P.shape)
    lead = P.shape[:-1]
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), lead)
    if np.any(sigma <= 0):
        raise ValueError("KL support needs sigma > 0; use the plain expectation for sigma = 0")
    upper = np.broadcast_to(np.asarray(upper, dtype=float), lead)
    floor = 1e-8 * upper if eta_floor is None else np.broadcast_to(np.asarray(eta_floor, float), lead)
    vmin, gap = _kl_parts(V, P)

    lo = floor.astype(float).copy()
    hi = np.maximum(upper / sigma, lo)
    a, b = lo.copy(), hi.copy()
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = _kl_shifted(c, vmin, gap, P, sigma)
    fd = _kl_shifted(d, vmin, gap, P, sigma)
    width = float(np.max(b - a)) if b.size else 0.0
    n_iter = 0 if width <= tol else int(math.ceil(math.log(tol / width) / math.log(_INVPHI)))
    for _ in range(n_iter):
        left = fc >= fd
        # keep [a, d] when the left probe wins, else [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = np.where(left, b - _INVPHI * (b - a), d)
        new_d = np.where(left, c, a + _INVPHI * (b - a))
        fnew_c = np.where(left, _kl_shifted(new_c, vmin, gap, P, sigma), fd)
        fnew_d = np.where(left, fc, _kl_shifted(new_d, vmin, gap, P, sigma))
        c, d, fc, fd = new_c, new_d, fnew_c, fnew_d
    mid = 0.5 * (a + b)

    etas = np.stack([lo, hi, mid], axis=-1)
    objs = _kl_shifted(etas, vmin, gap, P, sigma)
    etas = np.concatenate([np.zeros(lead + (1,)), etas], axis=-1)
    objs = np.concatenate([vmin[..., None], objs], axis=-1)
    best = np.argmax(objs, axis=-1)[..., None]
    return (
        np.take_along_axis(objs, best, axis=-1)[..., 0],
        np.take_along_axis(etas, best, axis=-1)[..., 0],
    )


def kl_support(q: SupportQuery) -> SupportResult:
    if q.divergence is not Divergence.KL:
        raise ValueError("kl_support needs a KL query")
    q.check()
    if q.radius == 0:
        raise ValueError("KL support with sigma = 0 is the plain expectation; branch before calling")
    val, eta = kl_support_batch(q.values, q.center, q.radius, q.upper, q.eta_floor)
    return SupportResult(float(val), float(eta))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def robust_expectation(V, P, sigma, divergence, *, upper, assume_zero_min=False, eta_floor=None):
    """Batched support function used by the planners.

    Rows of ``P`` that are identically zero (unvisited cells of an empirical
    kernel) get value 0. Rows with ``sigma == 0`` get the plain expectation.
    """
    divergence = Divergence(divergence)
    P = np.asarray(P, dtype=float)
    V = np.broadcast_to(np.asarray(V, dtype=float), P.shape)
    lead = P.shape[:-1]
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), lead)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), lead)
    empty = P.sum(axis=-1) <= 0
    out = np.einsum("...s,...s->...", P, V)
    if divergence is Divergence.TV:
        live = ~empty & (sigma > 0)
        if live.any():
            out[live] = tv_support_batch(V[live], P[live], sigma[live], assume_zero_min, upper[live])[0]
    else:
        live = ~empty & (sigma > 0)
        if live.any():
            floor = None if eta_floor is None else np.broadcast_to(eta_floor, lead)[live]
            out[live] = kl_support_batch(V[live], P[live], sigma[live], upper[live], floor)[0]
    out[empty] = 0.0
    return out


def support(q: SupportQuery) -> SupportResult:
    """Dispatch on divergence; KL with zero radius returns the plain expectation."""
    if q.divergence is Divergence.KL and q.radius == 0:
        q.check()
        return SupportResult(float(q.center @ q.values), 0.0)
    if q.divergence is Divergence.KL:
        return kl_support(q)
    return tv_support(q)


# ---------------------------------------------------------------------------
# brute-force primal oracle
# ---------------------------------------------------------------------------

MAX_ORACLE_STATES = 6
MAX_GRID_POINTS = 5_000_000


def kl_divergence(Q, P) -> np.ndarray:
    """KL(Q || P) along the last axis; +inf where Q puts mass outside supp(P)."""
    Q = np.asarray(Q, dtype=float)
    P = np.asarray(P, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(Q > 0, Q * np.log(Q / P), 0.0)
    terms = np.where((Q > 0) & (P <= 0), np.inf, terms)
    return terms.sum(axis=-1)


def _tv_primal(V, P, sigma) -> float:
    # variables: Q (S), t (S) with t >= |Q - P|
    S = len(V)
    c = np.concatenate([V, np.zeros(S)])
    eye = np.eye(S)
    A_ub = np.block([[eye, -eye], [-eye, -eye], [np.zeros((1, S)), 0.5 * np.ones((1, S))]])
    b_ub = np.concatenate([P, -P, [sigma]])
    A_eq = np.concatenate([np.ones(S), np.zeros(S)])[None, :]
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
        bounds=[(0, None)] * (2 * S), method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"TV primal LP failed: {res.message}")
    return float(res.fun)


def _grid(steps: int, dims: int) -> np.ndarray:
    """All integer vectors of length ``dims`` with entries summing to at most ``steps``."""
    if dims == 0:
        return np.zeros((1, 0), dtype=int)
    pts = [c for c in itertools.product(range(steps + 1), repeat=dims) if sum(c) <= steps] \
        if dims > 1 else [(k,) for k in range(steps + 1)]
    return np.array(pts, dtype=int)


def _kl_primal_grid(V, P, sigma, resolution) -> float:
    keep = np.nonzero(P > 0)[0]
    V, P = V[keep], P[keep]
    n = len(V)
    if n == 1:
        return float(V[0])
    steps = int(round(1.0 / resolution))
    # the argmin/argmax coordinates stay continuous; the rest are gridded
    i, j = int(np.argmin(V)), int(np.argmax(V))
    if i == j:
        return float(V[0])
    others = np.array([k for k in range(n) if k not in (i, j)], dtype=int)
    n_points = math.comb(steps + len(others), len(others))
    if n_points > MAX_GRID_POINTS:
        raise ValueError(f"grid too large ({n_points} points); raise resolution or reduce S")
    fixed = _grid(steps, len(others)) / steps
    rest = 1.0 - fixed.sum(axis=1)
    base = fixed @ V[others]
    const = kl_divergence(fixed, P[others]) if len(others) else np.zeros(len(fixed))
    pi, pj = P[i], P[j]

    def kl_line(t):
        u = rest - t
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(t > 0, t * np.log(t / pi), 0.0)
            b = np.where(u > 0, u * np.log(u / pj), 0.0)
        return const + a + b

    t0 = rest * pi / (pi + pj)
    feasible = kl_line(t0) <= sigma
    if not feasible.any():
        raise RuntimeError("no grid slice intersects the KL ball")
    # the objective decreases in t (V_i <= V_j), so push t as far up as allowed
    inside, outside = t0.copy(), rest.copy()
    ok = kl_line(outside) <= sigma
    inside[ok] = outside[ok]
    for _ in range(200):
        mid = 0.5 * (inside + outside)
        good = kl_line(mid) <= sigma
        inside = np.where(good, mid, inside)
        outside = np.where(good, outside, mid)
        if np.max(outside - inside) < 1e-15:
            break
    vals = base + inside * V[i] + (rest - inside) * V[j]
    return float(np.min(vals[feasible]))


def brute_force_support(q: SupportQuery, resolution: float = 1e-3) -> float:
    """Primal worst-case expectation computed without the dual.

    TV: exact linear program over the ball.
    KL: all coordinates of Q except those of min V and max V range over a
    grid of the given resolution; along each remaining one-dimensional slice
    the KL constraint cuts out an interval whose upper end (most mass on the
    min-V state) is found by bisection. The result over-estimates
    the infimum by at most O(resolution * H).
    """
    q.check()
    V, P = q.values, q.center
    if len(V) > MAX_ORACLE_STATES:
        raise ValueError(f"brute-force oracle limited to S <= {MAX_ORACLE_STATES}")
    if q.radius == 0:
        return float(P @ V)
    if q.divergence is Divergence.TV:
        if q.assume_zero_min:
            # a phantom zero-valued state absorbs the shifted mass
            return _tv_primal(np.append(V, 0.0), np.append(P, 0.0), q.radius)
        return _tv_primal(V, P, q.radius)
    return _kl_primal_grid(V, P, q.radius, resolution)
