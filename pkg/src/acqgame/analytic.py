"""Closed-form success probabilities, expected costs and utilities.

Every quantity reduces, on a piece where all rates are constant, to an
integral of ``exp(-k r)`` over ``[0, L]``; the pieces are the union of the
controls' breakpoints (plus, for continuations, the times where the remaining
horizon crosses a profile breakpoint).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .model import Control, GameParams, ThresholdPolicy, TwoStagePolicy, continuation_control, merge_breakpoints

METHODS = ("closed_form", "quadrature", "monte_carlo")


@dataclass(frozen=True)
class UtilityReport:
    success_prob: float
    expected_cost: float
    utility: float
    method: str = "closed_form"
    stderr: float | None = None
    success_stderr: float | None = None
    cost_stderr: float | None = None
    reps: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method != "monte_carlo" and self.stderr is not None:
            raise ValueError("stderr is only defined for monte_carlo reports")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> UtilityReport:
        return cls(**d)


def _expint(k, length):
    """``int_0^length exp(-k r) dr`` for arrays, stable near ``k = 0``."""
    k = np.asarray(k, dtype=float)
    length = np.asarray(length, dtype=float)
    kl = k * length
    small = np.abs(kl) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        big = -np.expm1(-kl) / np.where(small, 1.0, k)
    series = length * (1.0 - kl / 2.0 + kl * kl / 6.0 - kl**3 / 24.0)
    return np.where(small, series, big)


def contact_density(a: Control, t):
    """Density ``exp(-abar(t)) a(t)`` of the first contact time."""
    return np.exp(-a.cumulative(t)) * a.rate(t)


def opponent_survival(a_j: Control, s):
    """Probability that the opponent has not contacted by ``s``."""
    return np.exp(-a_j.cumulative(s))


def expected_cost(a: Control, horizon: float) -> float:
    """Expected integrated effort until contact or ``horizon``.

    With ``X = abar(horizon)`` the boundary term ``X exp(-X)`` plus the
    per-segment antiderivative ``-(u + 1) exp(-u)`` of ``u exp(-u)`` telescope
    to ``1 - exp(-X)``.
    """
    return float(-math.expm1(-a.cumulative(horizon)))


def _pieces(edges: np.ndarray, *controls: Control):
    u0 = edges[:-1]
    length = np.diff(edges)
    mid = u0 + 0.5 * length
    rates = [c.rate(mid) for c in controls]
    starts = [c.cumulative(u0) for c in controls]
    return u0, length, rates, starts


def success_prob_one_lock(a_i: Control, a_j: Control, T: float) -> float:
    """Probability that agent i contacts first and before ``T``."""
    edges = merge_breakpoints(a_i, a_j, span=T)
    _, length, (a, b), (x0, y0) = _pieces(edges, a_i, a_j)
    return float(np.sum(a * np.exp(-x0 - y0) * _expint(a + b, length)))


def _one_lock_direct(a_i: Control, a_j: Control, T: float, nu: float, reward: float = 1.0) -> float:
    """Utility as a single running-cost integral plus terminal penalty."""
    edges = merge_breakpoints(a_i, a_j, span=T)
    _, length, (a, b), (x0, y0) = _pieces(edges, a_i, a_j)
    x1 = x0 + a * length
    gain = reward * np.sum(a * np.exp(-x0 - y0) * _expint(a + b, length))
    running = np.sum((x0 + 1.0) * np.exp(-x0) - (x1 + 1.0) * np.exp(-x1))
    xT = a_i.cumulative(T)
    return float(gain - nu * running - nu * xT * math.exp(-xT))


def utility_one_lock(a_i: Control, a_j: Control, p: GameParams, reward: float = 1.0) -> UtilityReport:
    T = p.horizon
    prob = success_prob_one_lock(a_i, a_j, T)
    cost = expected_cost(a_i, T)
    return UtilityReport(prob, cost, reward * prob - p.nu * cost)


class SilentValue(NamedTuple):
    value: float
    action: float


def silent_value(c: float, nu: float, beta: float, U: float, x: float = 0.0) -> SilentValue:
    """Optimal value and rate against a silent opponent for reward ``c`` over ``U``."""
    if U < 0 or x < 0:
        raise ValueError("U and x must be non-negative")
    if nu <= c:
        return SilentValue(((c - nu) * -math.expm1(-beta * U) - nu * x) * math.exp(-x), beta)
    return SilentValue(-nu * x * math.exp(-x), 0.0)


# ---------------------------------------------------------------------------
# two locks


def _kinks(profile: Control, T: float) -> np.ndarray:
    """Contact times at which the remaining horizon hits a profile breakpoint."""
    k = T - profile.breakpoints
    return k[(k > 0) & (k < T)]


class _TwoLockTerms(NamedTuple):
    success_prob: float
    stage1_cost: float
    stage2_cost: float


def _two_lock_profile_terms(pi: TwoStagePolicy, a_j: Control, T: float) -> _TwoLockTerms:
    S, F = pi.on_success, pi.on_failure
    edges = np.unique(np.concatenate((merge_breakpoints(pi.stage1, a_j, span=T), _kinks(S, T), _kinks(F, T))))
    u0, length, (a, b), (x0, y0) = _pieces(edges, pi.stage1, a_j)
    mid = u0 + 0.5 * length
    rs, rf = S.rate(T - mid), F.rate(T - mid)
    zs0, zf0 = S.cumulative(T - u0), F.cumulative(T - u0)
    i_xy = a * np.exp(-x0 - y0) * _expint(a + b, length)
    i_xys = a * np.exp(-x0 - y0 - zs0) * _expint(a + b - rs, length)
    i_xf = a * np.exp(-x0 - zf0) * _expint(a - rf, length)
    i_xyf = a * np.exp(-x0 - y0 - zf0) * _expint(a + b - rf, length)
    cost1 = expected_cost(pi.stage1, T)
    prob = float(np.sum(i_xy - i_xys))
    cost2 = float(cost1 - np.sum(i_xys + i_xf - i_xyf))
    return _TwoLockTerms(prob, cost1, cost2)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)


def _two_lock_iterated_terms(pi: TwoStagePolicy, a_j: Control, T: float) -> _TwoLockTerms:
    """Outer Gauss-Legendre over stage-one pieces, inner integrals in closed form."""
    edges = merge_breakpoints(pi.stage1, a_j, span=T)
    prob = 0.0
    cost2 = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        tau = lo + 0.5 * (hi - lo) * (_GL_NODES + 1.0)
        w = 0.5 * (hi - lo) * _GL_WEIGHTS
        f1 = contact_density(pi.stage1, tau)
        if not np.any(f1):
            continue
        h = opponent_survival(a_j, tau)
        s_reach = np.empty_like(tau)
        f_reach = np.empty_like(tau)
        for n, t in enumerate(tau):
            cs = continuation_control(pi.on_success, t, T)
            cf = continuation_control(pi.on_failure, t, T)
            s_reach[n] = -math.expm1(-cs.total) if cs is not None else 0.0
            f_reach[n] = -math.expm1(-cf.total) if cf is not None else 0.0
        prob += float(np.sum(w * f1 * h * s_reach))
        cost2 += float(np.sum(w * f1 * (h * s_reach + (1.0 - h) * f_reach)))
    return _TwoLockTerms(prob, expected_cost(pi.stage1, T), cost2)


def _two_lock_terms(pi: TwoStagePolicy, a_j: Control, T: float) -> _TwoLockTerms:
    if pi.is_profile:
        return _two_lock_profile_terms(pi, a_j, T)
    return _two_lock_iterated_terms(pi, a_j, T)


def _stage1(policy) -> Control:
    return policy.stage1 if isinstance(policy, TwoStagePolicy) else policy


def success_prob_two_lock(pi_i: TwoStagePolicy, a_j_stage1: Control, T: float) -> float:
    """Probability of contacting lock one first and then lock two before ``T``."""
    return _two_lock_terms(pi_i, _stage1(a_j_stage1), T).success_prob


def utility_two_lock(pi_i: TwoStagePolicy, pi_j, p: GameParams) -> UtilityReport:
    """Agent i's two-lock utility; only agent j's stage-one control matters."""
    terms = _two_lock_terms(pi_i, _stage1(pi_j), p.horizon)
    cost = terms.stage1_cost + terms.stage2_cost
    return UtilityReport(terms.success_prob, cost, terms.success_prob - p.nu * cost)


def _as_policy(policy, p: GameParams):
    if isinstance(policy, ThresholdPolicy):
        if p.locks == 1:
            return policy.control(p.horizon)
        return TwoStagePolicy.gamma2(policy.psi, policy.rate, p.horizon)
    return policy


def utility(policy_i, policy_j, p: GameParams) -> UtilityReport:
    """Dispatch on the lock count; accepts controls, threshold or two-stage policies."""
    policy_i, policy_j = (_as_policy(x, p) for x in (policy_i, policy_j))
    if p.locks == 1:
        return utility_one_lock(_stage1(policy_i), _stage1(policy_j), p)
    return utility_two_lock(policy_i, policy_j, p)
