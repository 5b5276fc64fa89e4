"""Best responses and threshold Nash equilibria for one- and two-lock games.

Agents are internally relabelled so that the opponent ``j`` is the faster one
(``beta_j >= beta_i``); results are reported in the caller's labelling.
Boundary ties resolve toward the less active policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import analytic
from .model import GameParams, ParameterError, StageState, ThresholdPolicy, TwoStagePolicy

# regime labels
NU_BOUND_SILENCE = "nu_bound_silence"
SILENCE = "silence"
ONE_SILENT = "one_silent"
INTERIOR = "interior"
THRESHOLD = "threshold"

BISECT_FTOL = 1e-12
BISECT_MAXITER = 200
BR_VALUE_TOL = 1e-10


class RegimeError(ValueError):
    """The requested quantity is not defined in the parameter regime that applies."""

    def __init__(self, regime: str, message: str):
        super().__init__(f"{message} (applicable regime: {regime})")
        self.regime = regime


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    satisfied: bool
    lhs: float
    rhs: float
    applicable: bool = True

    def to_dict(self) -> dict:
        return {"name": self.name, "satisfied": self.satisfied, "lhs": self.lhs, "rhs": self.rhs, "applicable": self.applicable}


@dataclass(frozen=True)
class EquilibriumResult:
    thresholds: tuple[float, ...]
    rates: tuple[float, ...]
    horizon: float
    locks: int
    regime: str
    conditions_checked: tuple[ConditionCheck, ...] = ()
    certified: bool = False
    conjectural: bool = False
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def profile(self) -> tuple:
        if self.locks == 1:
            return tuple(ThresholdPolicy(psi, b) for psi, b in zip(self.thresholds, self.rates))
        return tuple(TwoStagePolicy.gamma2(psi, b, self.horizon) for psi, b in zip(self.thresholds, self.rates))

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "rates": list(self.rates),
            "horizon": self.horizon,
            "locks": self.locks,
            "regime": self.regime,
            "conditions_checked": [c.to_dict() for c in self.conditions_checked],
            "certified": self.certified,
            "conjectural": self.conjectural,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> EquilibriumResult:
        return cls(
            thresholds=tuple(d["thresholds"]),
            rates=tuple(d["rates"]),
            horizon=d["horizon"],
            locks=d["locks"],
            regime=d["regime"],
            conditions_checked=tuple(ConditionCheck(**c) for c in d["conditions_checked"]),
            certified=d["certified"],
            conjectural=d["conjectural"],
            notes=tuple(d["notes"]),
        )


# ---------------------------------------------------------------------------
# one lock


def theta(nu: float, beta_opp: float, T: float) -> float:
    """Time at which an opponent running at ``beta_opp`` has survival ``nu``, capped at ``T``."""
    if nu >= 1:
        return 0.0
    return min(-math.log(nu) / beta_opp, T)


def best_response_one_lock(psi_j: float, p: GameParams) -> ThresholdPolicy:
    """Threshold best response of agent i to an opponent stopping at ``psi_j``."""
    if p.nu >= 1:
        return ThresholdPolicy(0.0, p.beta_i)
    if p.nu < math.exp(-p.beta_j * psi_j):
        return ThresholdPolicy(p.horizon, p.beta_i)
    return ThresholdPolicy(theta(p.nu, p.beta_j, p.horizon), p.beta_i)


def _br_gap_one_lock(psi_i: float, psi_j: float, p: GameParams) -> float:
    T = p.horizon
    a_j = ThresholdPolicy(psi_j, p.beta_j).control(T)
    played = analytic.utility_one_lock(ThresholdPolicy(psi_i, p.beta_i).control(T), a_j, p).utility
    br = analytic.utility_one_lock(best_response_one_lock(psi_j, p).control(T), a_j, p).utility
    return br - played


def nash_one_lock(p: GameParams) -> EquilibriumResult:
    T = p.horizon
    rates = (p.beta_i, p.beta_j)
    if p.nu >= 1:
        return EquilibriumResult((0.0, 0.0), rates, T, 1, NU_BOUND_SILENCE, certified=True,
                                 notes=("nu >= 1: silence dominates every policy",))
    swap = p.beta_i > p.beta_j
    q = p.swapped() if swap else p
    th_i = theta(q.nu, q.beta_j, T)
    if q.beta_j == q.beta_i:
        pair = (th_i, theta(q.nu, q.beta_i, T))
    else:
        pair = (th_i, T)
    gaps = (_br_gap_one_lock(pair[0], pair[1], q), _br_gap_one_lock(pair[1], pair[0], q.swapped()))
    if swap:
        pair, gaps = pair[::-1], gaps[::-1]
    certified = all(g < BR_VALUE_TOL for g in gaps)
    notes = (f"best-response gaps {gaps[0]:.3e}, {gaps[1]:.3e}",)
    return EquilibriumResult(pair, rates, T, 1, THRESHOLD, certified=certified, notes=notes)


# ---------------------------------------------------------------------------
# two locks


def stage2_value(z2: StageState, p: GameParams) -> float:
    """Continuation value at the second decision epoch against a threshold opponent."""
    if z2.flag.value == "start":
        raise ValueError("stage2_value needs a post-contact state")
    if z2.flag.value == "failure" or z2.contact_time >= p.horizon:
        return 0.0
    return analytic.silent_value(1.0, p.nu, p.beta_i, p.horizon - z2.contact_time).value


def _silence_ratio(nu: float) -> float:
    return (1.0 - 2.0 * nu) / (1.0 - nu)


def _fixed_point_gap(psi: float, beta_own: float, beta_opp: float, nu: float, T: float) -> float:
    return math.exp(-beta_opp * psi) * -math.expm1(-beta_own * (T - psi)) - nu / (1.0 - nu)


def _bisect(beta_own: float, beta_opp: float, nu: float, T: float) -> float:
    """Root of the (strictly decreasing) stopping-time equation on ``[0, T]``."""
    lo, hi = 0.0, T
    if _fixed_point_gap(lo, beta_own, beta_opp, nu, T) <= 0:
        return 0.0
    for _ in range(BISECT_MAXITER):
        mid = 0.5 * (lo + hi)
        g = _fixed_point_gap(mid, beta_own, beta_opp, nu, T)
        if abs(g) <= BISECT_FTOL:
            return mid
        if g > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * math.ulp(T):
            break
    return 0.5 * (lo + hi)


def _two_lock_regime(p: GameParams) -> str:
    if p.nu >= 0.5:
        return NU_BOUND_SILENCE
    r = _silence_ratio(p.nu)
    lo_beta, hi_beta = sorted((p.beta_i, p.beta_j))
    if math.exp(-hi_beta * p.horizon) >= r:
        return SILENCE
    if math.exp(-lo_beta * p.horizon) >= r:
        return ONE_SILENT
    return INTERIOR


def solve_psi_fixed_point(p: GameParams, agent: str = "i") -> float:
    """Interior stopping threshold of ``agent`` ('i' or 'j') in the two-lock game.

    Solves ``exp(-b_opp psi) (1 - exp(-b_own (T - psi))) = nu / (1 - nu)`` by
    bisection on ``[0, T]``; the left side is strictly decreasing.
    """
    if agent not in ("i", "j"):
        raise ValueError("agent must be 'i' or 'j'")
    regime = _two_lock_regime(p)
    if regime != INTERIOR:
        raise RegimeError(regime, "interior fixed point requested outside the interior regime")
    q = p if agent == "i" else p.swapped()
    return _bisect(q.beta_i, q.beta_j, q.nu, q.horizon)


def fixed_point_residual(psi: float, p: GameParams, agent: str = "i") -> float:
    q = p if agent == "i" else p.swapped()
    return _fixed_point_gap(psi, q.beta_i, q.beta_j, q.nu, q.horizon)


def check_ne_conditions(psi_i: float, psi_j: float, p: GameParams) -> tuple[ConditionCheck, ConditionCheck]:
    """Evaluate the two sufficient inequalities for the interior two-lock equilibrium."""
    if p.nu >= 0.5:
        raise RegimeError(NU_BOUND_SILENCE, "conditions are stated for nu < 1/2")
    T, nu = p.horizon, p.nu
    out = []
    for name, b_own, b_opp, psi in (("cond_i", p.beta_i, p.beta_j, psi_j), ("cond_j", p.beta_j, p.beta_i, psi_i)):
        lhs = math.exp(-b_own * (T - psi))
        s = math.exp(-b_opp * psi)
        den = s - nu
        if den <= 0:
            out.append(ConditionCheck(name, False, lhs, math.nan, applicable=False))
            continue
        rhs = (s - 2 * nu) / den
        out.append(ConditionCheck(name, lhs > rhs, lhs, rhs))
    return tuple(out)


def best_response_two_lock(psi_j: float, p: GameParams) -> TwoStagePolicy:
    """Best two-stage threshold response to an opponent playing the threshold family with ``psi_j``.

    The continuation after a success is full effort (its value is the
    silent-opponent value with reward one), after a failure silence.  The
    stage-one marginal gain ``h_j(t) v(T - t) - nu`` is decreasing in ``t``,
    so the best response stops at its zero crossing.
    """
    T, nu = p.horizon, p.nu
    if nu >= 0.5:
        return TwoStagePolicy.gamma2(0.0, p.beta_i, T)

    def gain(t):
        return math.exp(-p.beta_j * min(t, psi_j)) * (1.0 - nu) * -math.expm1(-p.beta_i * (T - t)) - nu

    if gain(0.0) <= 0:
        return TwoStagePolicy.gamma2(0.0, p.beta_i, T)
    lo, hi = 0.0, T
    for _ in range(BISECT_MAXITER):
        mid = 0.5 * (lo + hi)
        g = gain(mid)
        if abs(g) <= BISECT_FTOL:
            lo = hi = mid
            break
        if g > 0:
            lo = mid
        else:
            hi = mid
    return TwoStagePolicy.gamma2(0.5 * (lo + hi), p.beta_i, T)


def _br_gap_two_lock(psi_i: float, psi_j: float, p: GameParams) -> float:
    T = p.horizon
    opp = TwoStagePolicy.gamma2(psi_j, p.beta_j, T)
    played = analytic.utility_two_lock(TwoStagePolicy.gamma2(psi_i, p.beta_i, T), opp, p).utility
    br = analytic.utility_two_lock(best_response_two_lock(psi_j, p), opp, p).utility
    return br - played


def nash_two_lock(p: GameParams) -> EquilibriumResult:
    T = p.horizon
    rates = (p.beta_i, p.beta_j)
    q = p if p.locks == 2 else GameParams(p.beta_i, p.beta_j, p.nu, T, 2, p.n_agents)
    regime = _two_lock_regime(q)
    if regime == NU_BOUND_SILENCE:
        return EquilibriumResult((0.0, 0.0), rates, T, 2, regime, certified=True,
                                 notes=("nu >= 1/2: mutual silence",))
    swap = q.beta_i > q.beta_j
    s = q.swapped() if swap else q
    conditions: tuple[ConditionCheck, ...] = ()
    notes = []
    if regime == SILENCE:
        pair = (0.0, 0.0)
    elif regime == ONE_SILENT:
        pair = (0.0, T + math.log(_silence_ratio(s.nu)) / s.beta_j)
        if math.exp(-s.beta_i * T) == _silence_ratio(s.nu):
            notes.append("boundary tie between one-silent and interior regimes resolved toward one-silent")
    else:
        pair = (solve_psi_fixed_point(s, "i"), solve_psi_fixed_point(s, "j"))
        conditions = check_ne_conditions(pair[0], pair[1], s)
    gaps = (_br_gap_two_lock(pair[0], pair[1], s), _br_gap_two_lock(pair[1], pair[0], s.swapped()))
    if swap:
        pair, gaps = pair[::-1], gaps[::-1]
        conditions = tuple(
            ConditionCheck({"cond_i": "cond_j", "cond_j": "cond_i"}[c.name], c.satisfied, c.lhs, c.rhs, c.applicable)
            for c in conditions
        )[::-1]
    conds_ok = all(c.satisfied for c in conditions)
    br_ok = all(g < BR_VALUE_TOL for g in gaps)
    notes.append(f"best-response gaps {gaps[0]:.3e}, {gaps[1]:.3e}")
    if not conds_ok:
        notes.append("sufficient conditions fail: candidate not certified, run the two-stage grid oracle")
    elif not br_ok:
        notes.append("conditions hold but a threshold best response improves on the candidate: not certified")
    return EquilibriumResult(pair, rates, T, 2, regime, conditions, conds_ok and br_ok, notes=tuple(notes))


def nash(p: GameParams) -> EquilibriumResult:
    if p.n_agents > 2:
        return nash_n_player_conjecture(p, p.n_agents, p.locks)
    return nash_one_lock(p) if p.locks == 1 else nash_two_lock(p)


def nash_n_player_conjecture(p: GameParams, N: int, locks: int) -> EquilibriumResult:
    """Conjectured symmetric threshold profile for ``N`` identical agents."""
    if p.beta_i != p.beta_j:
        raise ParameterError("beta_j", "must equal beta_i for the N-player conjecture")
    if N < 2:
        raise ParameterError("n_agents", "must be an integer >= 2")
    beta, nu, T = p.beta_i, p.nu, p.horizon
    rates = (beta,) * N
    note = ("conjectural profile; verify with the Monte Carlo deviation probe",)
    if locks == 1:
        if nu >= 1:
            return EquilibriumResult((0.0,) * N, rates, T, 1, NU_BOUND_SILENCE, conjectural=True, notes=note)
        th = -math.log(nu) / ((N - 1) * beta) if math.exp(-beta * (N - 1) * T) <= nu else T
        return EquilibriumResult((th,) * N, rates, T, 1, THRESHOLD, conjectural=True, notes=note)
    if locks != 2:
        raise ParameterError("locks", "must be 1 or 2")
    if nu >= 0.5:
        return EquilibriumResult((0.0,) * N, rates, T, 2, NU_BOUND_SILENCE, conjectural=True, notes=note)
    if math.exp(-beta * T) >= _silence_ratio(nu):
        return EquilibriumResult((0.0,) * N, rates, T, 2, SILENCE, conjectural=True, notes=note)
    psi = _bisect(beta, (N - 1) * beta, nu, T)
    return EquilibriumResult((psi,) * N, rates, T, 2, INTERIOR, conjectural=True, notes=note)
