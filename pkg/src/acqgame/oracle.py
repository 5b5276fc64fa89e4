"""Independent numerical oracles.

Utilities are recomputed by adaptive quadrature of the dynamic-programming
form (running reward plus terminal term) rather than from the closed forms,
and best responses are searched over piecewise-constant controls on an equal
time grid.

On a grid with segment width ``h`` the one-lock utility factorises as
``J = sum_k S_k phi_k(l_k)`` where ``S_k = prod_{m<k} exp(-l_m h)`` and
``phi_k(l) = int_seg g(s) l exp(-l (s - t_k)) ds``.  Here ``g`` is the payoff
density of a first contact at ``s``: ``h_j(s) - nu`` for one lock, and the
continuation value minus ``nu`` for two locks.  The backward recursion
``V_k = max_l phi_k(l) + exp(-l h) V_{k+1}`` is therefore an exact global
search, equivalent to enumerating all ``|levels|^n`` vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .analytic import UtilityReport
from .model import Control, GameParams, ThresholdPolicy, TwoStagePolicy, continuation_control, merge_breakpoints
from .quadrature import adaptive_simpson

EXHAUSTIVE_LIMIT = 2**20
METHODS = ("auto", "dp", "exhaustive", "ascent")
STAGE2_MODES = ("closed_form", "full_grid")


class GridSearchError(ValueError):
    pass


def epsilon(n_segments: int) -> float:
    """Certification tolerance for a grid of ``n_segments`` segments."""
    return 2e-3 if n_segments >= 80 else 5e-3


@dataclass(frozen=True)
class GridSpec:
    n_segments: int = 40
    levels: tuple[float, ...] | None = None  # None: {0, beta/2, beta} for n <= 12, else {0, beta}
    stage2_mode: str = "closed_form"
    method: str = "auto"
    seed: int = 0  # coordinate-ascent starts

    def __post_init__(self):
        if int(self.n_segments) < 1:
            raise ValueError("n_segments must be >= 1")
        if self.stage2_mode not in STAGE2_MODES:
            raise ValueError(f"stage2_mode must be one of {STAGE2_MODES}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.levels is not None:
            object.__setattr__(self, "levels", tuple(sorted({float(x) for x in self.levels})))

    def resolve_levels(self, beta: float) -> np.ndarray:
        if self.levels is None:
            lv = (0.0, beta / 2, beta) if self.n_segments <= 12 else (0.0, beta)
        else:
            lv = self.levels
            if min(lv) < 0 or max(lv) > beta * (1 + 1e-12):
                raise ValueError(f"levels must lie in [0, beta={beta}]")
        return np.asarray(lv, dtype=float)


@dataclass(frozen=True)
class GridResult:
    control: object  # Control for one lock, TwoStagePolicy for two locks
    utility: UtilityReport
    grid_value: float
    method: str
    certified: bool  # False for the coordinate-ascent heuristic
    level_index: tuple[int, ...]

    def __iter__(self):
        yield self.control
        yield self.utility


# ---------------------------------------------------------------------------
# quadrature utilities


def _terminal(nu: float, x: float) -> float:
    return -nu * x * math.exp(-x)


def quadrature_utility(a_i: Control, a_j: Control, p: GameParams, reward: float = 1.0, tol: float = 1e-11) -> UtilityReport:
    """One-lock utility from ``int (h_j - nu x) exp(-x) a ds + g(x(T))``."""
    T, nu = p.horizon, p.nu
    edges = merge_breakpoints(a_i, a_j, span=T)

    def f(s, anchor):
        x = a_i.cumulative(s)
        return (reward * np.exp(-a_j.cumulative(s)) - nu * x) * np.exp(-x) * a_i.rate(anchor)

    def fp(s, anchor):
        x = a_i.cumulative(s)
        return np.exp(-a_j.cumulative(s) - x) * a_i.rate(anchor)

    J = adaptive_simpson(f, edges, tol).value + _terminal(nu, a_i.cumulative(T))
    prob = adaptive_simpson(fp, edges, tol).value
    cost = (reward * prob - J) / nu
    return UtilityReport(prob, cost, J, "quadrature")


def _stage2_value(cont, tau: np.ndarray, T: float, reward: float, nu: float) -> np.ndarray:
    """Value of a continuation run against a silent opponent, per contact time."""
    tau = np.asarray(tau, dtype=float)
    if isinstance(cont, Control):
        reach = -np.expm1(-cont.cumulative(np.maximum(T - tau, 0.0)))
        return (reward - nu) * reach
    out = np.empty_like(tau)
    for k, t in np.ndenumerate(tau):
        c = continuation_control(cont, float(t), T)
        out[k] = 0.0 if c is None else (reward - nu) * -math.expm1(-c.total)
    return out


def _continuation_edges(pi: TwoStagePolicy, T: float) -> list[float]:
    pts = []
    for c in (pi.on_success, pi.on_failure):
        if isinstance(c, Control):
            pts.extend(T - c.breakpoints)
    return [t for t in pts if 0 < t < T]


def two_stage_utility(pi_i: TwoStagePolicy, pi_j: TwoStagePolicy, p: GameParams, tol: float = 1e-11) -> UtilityReport:
    """Two-lock utility by backward evaluation.

    The stage-two value after a contact at ``s`` is weighted by the chance
    ``h_j(s)`` that it was a success, and the stage-one problem is integrated
    in running-reward form.
    """
    if p.locks != 2:
        raise ValueError("two_stage_utility needs locks = 2")
    T, nu = p.horizon, p.nu
    a = pi_i.stage1
    a_j = pi_j.stage1 if isinstance(pi_j, TwoStagePolicy) else pi_j
    edges = np.unique(np.concatenate((merge_breakpoints(a, a_j, span=T), _continuation_edges(pi_i, T))))

    def f(s, anchor):
        x = a.cumulative(s)
        hj = np.exp(-a_j.cumulative(s))
        vs = _stage2_value(pi_i.on_success, s, T, 1.0, nu)
        vf = _stage2_value(pi_i.on_failure, s, T, 0.0, nu)
        return (hj * vs + (1 - hj) * vf - nu * x) * np.exp(-x) * a.rate(anchor)

    J = adaptive_simpson(f, edges, tol).value + _terminal(nu, a.cumulative(T))
    prob = _success_prob(pi_i, a_j, T, edges, tol)
    return UtilityReport(prob, (prob - J) / nu, J, "quadrature")


def _success_prob(pi_i: TwoStagePolicy, a_j: Control, T: float, edges, tol: float) -> float:
    a = pi_i.stage1

    def fp(s, anchor):
        dens = np.exp(-a.cumulative(s) - a_j.cumulative(s)) * a.rate(anchor)
        return dens * _stage2_value(pi_i.on_success, s, T, 1.0, 0.0)

    return adaptive_simpson(fp, edges, tol).value


# ---------------------------------------------------------------------------
# grid tables

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def segment_tables(payoff: Callable[[np.ndarray], np.ndarray], cuts: Sequence[float], T: float, n: int, levels: np.ndarray):
    """``phi[k, l]`` and ``decay[k, l]`` for payoff density ``payoff(s)``.

    ``cuts`` are the points where ``payoff`` is not smooth; each segment is
    split there and integrated by 24-point Gauss-Legendre on every piece.
    """
    h = T / n
    t = np.linspace(0.0, T, n + 1)
    cuts = np.asarray(sorted(set(float(c) for c in cuts if 0 < c < T)))
    phi = np.zeros((n, levels.size))
    for k in range(n):
        lo, hi = t[k], t[k + 1]
        inner = cuts[(cuts > lo) & (cuts < hi)]
        pts = np.concatenate(([lo], inner, [hi]))
        for a, b in zip(pts[:-1], pts[1:]):
            s = a + 0.5 * (b - a) * (_GL_X + 1.0)
            w = 0.5 * (b - a) * _GL_W
            g = payoff(s)
            phi[k] += np.sum(w[None, :] * g[None, :] * levels[:, None] * np.exp(-levels[:, None] * (s[None, :] - lo)), axis=1)
    decay = np.exp(-np.outer(np.ones(n), levels) * h)
    return phi, decay


def _dp(phi, decay):
    n, _ = phi.shape
    V = 0.0
    choice = np.zeros(n, dtype=np.int64)
    for k in range(n - 1, -1, -1):
        q = phi[k] + decay[k] * V
        j = int(np.argmax(q))  # first maximiser: lowest level on ties
        choice[k] = j
        V = float(q[j])
    return choice, V


def _value(phi, decay, idx) -> float:
    seg = np.arange(idx.size)
    d = decay[seg, idx]
    surv = np.concatenate(([1.0], np.cumprod(d[:-1])))
    return float(np.sum(surv * phi[seg, idx]))


def _ascent(phi, decay, seed: int, starts: int = 8):
    n, L = phi.shape
    rng = np.random.default_rng(seed)
    best_idx, best = None, -math.inf
    for _ in range(starts):
        idx = rng.integers(0, L, n)
        v = _value(phi, decay, idx)
        improved = True
        while improved:
            improved = False
            for k in range(n):
                for l in range(L):
                    if l == idx[k]:
                        continue
                    trial = idx.copy()
                    trial[k] = l
                    tv = _value(phi, decay, trial)
                    if tv > v + 1e-15:
                        idx, v, improved = trial, tv, True
        if v > best or (v == best and tuple(idx) < tuple(best_idx)):
            best_idx, best = idx, v
    return best_idx, best


def search_tables(phi, decay, method: str, seed: int = 0):
    """Argmax level indices and grid value; returns ``(idx, value, method, certified)``."""
    n, L = phi.shape
    size = L**n
    if method == "auto":
        method = "exhaustive" if size <= EXHAUSTIVE_LIMIT else "dp"
    if method == "exhaustive":
        if size > EXHAUSTIVE_LIMIT:
            raise GridSearchError(
                f"search space {L}^{n} exceeds 2^20 candidates; use method='dp' (exact) or method='ascent' (heuristic)"
            )
        idx, val = kernels.enumerate_levels(phi, decay)
        return idx, val, method, True
    if method == "dp":
        idx, val = _dp(phi, decay)
        return idx, val, method, True
    idx, val = _ascent(phi, decay, seed)
    return idx, val, "ascent", False


def _grid_control(idx, levels, T, beta) -> Control:
    return Control.uniform(levels[idx], T, beta)


# ---------------------------------------------------------------------------
# best responses


def _opponent_control(a_j, p: GameParams) -> Control:
    if isinstance(a_j, ThresholdPolicy):
        return a_j.control(p.horizon)
    if isinstance(a_j, TwoStagePolicy):
        return a_j.stage1
    return a_j


def grid_best_response(a_j, p: GameParams, g: GridSpec = GridSpec(), reward: float = 1.0) -> GridResult:
    """Best one-lock response of agent i to ``a_j`` among grid controls."""
    a_j = _opponent_control(a_j, p)
    T, nu = p.horizon, p.nu
    levels = g.resolve_levels(p.beta_i)
    phi, decay = segment_tables(lambda s: reward * np.exp(-a_j.cumulative(s)) - nu, a_j.breakpoints, T, g.n_segments, levels)
    idx, val, method, cert = search_tables(phi, decay, g.method, g.seed)
    ctrl = _grid_control(idx, levels, T, p.beta_i)
    return GridResult(ctrl, quadrature_utility(ctrl, a_j, p, reward), val, method, cert, tuple(int(i) for i in idx))


def stage2_best_profiles(p: GameParams, g: GridSpec) -> tuple[Control, Control]:
    """Stage-two continuations: closed form (all-on iff nu < 1, failure silent) or grid search."""
    T, nu, beta = p.horizon, p.nu, p.beta_i
    if g.stage2_mode == "closed_form":
        on = Control.constant(beta, T, beta) if nu < 1 else Control.zero(T)
        return on, Control.zero(T)
    levels = g.resolve_levels(beta)
    out = []
    for reward in (1.0, 0.0):
        phi, decay = segment_tables(lambda s, r=reward: np.full_like(s, r - nu), (), T, g.n_segments, levels)
        idx, _, _, _ = search_tables(phi, decay, "dp")
        out.append(_grid_control(idx, levels, T, beta))
    return out[0], out[1]


def grid_best_response_two_stage(pi_j, p: GameParams, g: GridSpec = GridSpec()) -> GridResult:
    """Best two-lock response: stage-two continuations first, then a stage-one grid search."""
    if p.locks != 2:
        raise ValueError("grid_best_response_two_stage needs locks = 2")
    a_j = _opponent_control(pi_j, p)
    T, nu = p.horizon, p.nu
    on_s, on_f = stage2_best_profiles(p, g)

    def payoff(s):
        hj = np.exp(-a_j.cumulative(s))
        vs = _stage2_value(on_s, s, T, 1.0, nu)
        vf = _stage2_value(on_f, s, T, 0.0, nu)
        return hj * vs + (1 - hj) * vf - nu

    cuts = list(a_j.breakpoints) + [T - b for b in on_s.breakpoints] + [T - b for b in on_f.breakpoints]
    levels = g.resolve_levels(p.beta_i)
    phi, decay = segment_tables(payoff, cuts, T, g.n_segments, levels)
    idx, val, method, cert = search_tables(phi, decay, g.method, g.seed)
    pol = TwoStagePolicy(_grid_control(idx, levels, T, p.beta_i), on_s, on_f)
    return GridResult(pol, two_stage_utility(pol, TwoStagePolicy(a_j, Control.zero(T), Control.zero(T)), p),
                      val, method, cert, tuple(int(i) for i in idx))


# ---------------------------------------------------------------------------
# certification


@dataclass(frozen=True)
class AgentCertificate:
    agent: str
    profile_utility: float
    best_grid_utility: float
    improvement: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> AgentCertificate:
        return cls(**d)


def _profile_utility(own, other, p: GameParams) -> float:
    if p.locks == 1:
        return quadrature_utility(_opponent_control(own, p), _opponent_control(other, p), p).utility
    return two_stage_utility(own, other, p).utility


def certify_profile(policy_i, policy_j, p: GameParams, g: GridSpec = GridSpec(), tol: float | None = None) -> list[AgentCertificate]:
    """Largest grid improvement available to each agent against the other's policy."""
    tol = epsilon(g.n_segments) if tol is None else tol
    out = []
    for name, own, other, q in (("i", policy_i, policy_j, p), ("j", policy_j, policy_i, p.swapped())):
        base = _profile_utility(own, other, q)
        br = grid_best_response(other, q, g) if q.locks == 1 else grid_best_response_two_stage(other, q, g)
        gain = br.utility.utility - base
        out.append(AgentCertificate(name, base, br.utility.utility, gain, tol, gain <= tol))
    return out
