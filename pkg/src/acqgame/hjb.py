"""Verification of claimed HJB value functions on a (t, x) grid.

The control problems here have running reward ``ell(t, x) * a`` and terminal
reward ``g(x) = -nu x exp(-x)``, with state ``x' = a`` and ``a in [0, beta]``.
The HJB bracket is affine in ``a``, so the supremum is attained at ``0`` or
``beta`` and the residual is ``W_t + max(0, beta * (ell + W_x))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Surface = Callable[[np.ndarray, np.ndarray], np.ndarray]


def terminal_reward(nu: float, x):
    return -nu * x * np.exp(-x)


@dataclass(frozen=True)
class CandidateValue:
    """A claimed value function together with its control problem."""

    W: Surface
    running: Surface  # ell(t, x), running reward per unit rate
    beta: float
    nu: float
    horizon: float
    switch_time: float  # full rate before, silence after
    W_t: Optional[Surface] = None
    W_x: Optional[Surface] = None
    seams: tuple[float, ...] = ()
    params: dict = field(default_factory=dict)

    @property
    def has_partials(self) -> bool:
        return self.W_t is not None and self.W_x is not None


# ---------------------------------------------------------------------------
# silent opponent


def candidate_W_silent(c: float, nu: float, beta: float, U: float) -> CandidateValue:
    """Value function for reward ``c`` over horizon ``U`` against a silent opponent."""
    params = {"case": "silent", "c": c, "nu": nu, "beta": beta, "U": U}

    def running(t, x):
        return (c - nu * x) * np.exp(-x) + 0.0 * t

    if nu > c:
        return CandidateValue(
            W=lambda t, x: -nu * x * np.exp(-x) + 0.0 * t,
            W_t=lambda t, x: 0.0 * (t + x),
            W_x=lambda t, x: (nu * x - nu) * np.exp(-x) + 0.0 * t,
            running=running, beta=beta, nu=nu, horizon=U, switch_time=0.0, params=params,
        )
    kappa = math.exp(-beta * U) * (nu - c)
    params["kappa"] = kappa
    return CandidateValue(
        W=lambda t, x: (-nu * x - nu + c) * np.exp(-x) + kappa * np.exp(-x + beta * t),
        W_t=lambda t, x: beta * kappa * np.exp(-x + beta * t),
        W_x=lambda t, x: (nu * x - c) * np.exp(-x) - kappa * np.exp(-x + beta * t),
        running=running, beta=beta, nu=nu, horizon=U, switch_time=U, params=params,
    )


# ---------------------------------------------------------------------------
# threshold opponent


def threshold_switch_time(beta_j: float, nu: float, psi: float, T: float) -> float:
    """Stopping time of the best response to an opponent stopping at ``psi``."""
    if math.exp(-beta_j * psi) <= nu:
        return min(-math.log(nu) / beta_j, T)
    return T


def kappa1(beta_i: float, beta_j: float, nu: float, psi: float, t1: float) -> float:
    share = beta_i / (beta_i + beta_j)
    k = nu * math.exp(-beta_i * t1)
    if nu >= math.exp(-psi * beta_j):
        return k - share * math.exp(-(beta_i + beta_j) * t1)
    return (
        k
        - share * math.exp(-(beta_i + beta_j) * psi)
        + math.exp(-beta_j * psi) * (math.exp(-beta_i * psi) - math.exp(-beta_i * t1))
    )


def candidate_W_threshold(beta_i: float, beta_j: float, nu: float, psi: float, T: float, t1: float | None = None) -> CandidateValue:
    """Piecewise value function for the best response to a threshold opponent.

    Pieces: ``t <= min(t1, psi)`` (both active), ``psi <= t <= t1`` (opponent
    stopped, agent still active) and ``t > t1`` (agent silent).
    """
    if not 0 <= psi <= T:
        raise ValueError("psi must lie in [0, T]")
    case1 = math.exp(-beta_j * psi) <= nu
    expected = threshold_switch_time(beta_j, nu, psi, T)
    if t1 is None:
        t1 = expected
    elif abs(t1 - expected) > 1e-12 * max(1.0, T):
        if case1:
            raise ValueError(f"case 1 (exp(-beta_j psi) <= nu) requires t1 = -ln(nu)/beta_j = {expected!r}, got {t1!r}")
        raise ValueError(f"case 2 (exp(-beta_j psi) > nu) requires t1 = T = {T!r}, got {t1!r}")
    share = beta_i / (beta_i + beta_j)
    k1 = kappa1(beta_i, beta_j, nu, psi, t1)
    d = math.exp(-beta_j * psi) - nu
    e1 = math.exp(-beta_i * t1)
    sj = math.exp(-beta_j * psi)
    first_end = min(t1, psi)

    def which(t):
        t = np.asarray(t)
        return np.where(t <= first_end, 0, np.where((t >= psi) & (t <= t1), 1, 2))

    def W1(t, x):
        return -nu * x * np.exp(-x) - nu * np.exp(-x) + share * np.exp(-x - beta_j * t) + k1 * np.exp(-x + beta_i * t)

    def W2(t, x):
        return -d * e1 * np.exp(-x + beta_i * t) + (sj - nu * x - nu) * np.exp(-x)

    def W3(t, x):
        return -nu * x * np.exp(-x) + 0.0 * t

    def Wx1(t, x):
        return nu * x * np.exp(-x) - share * np.exp(-x - beta_j * t) - k1 * np.exp(-x + beta_i * t)

    def Wx2(t, x):
        return d * e1 * np.exp(-x + beta_i * t) - (sj - nu * x) * np.exp(-x)

    def Wx3(t, x):
        return (nu * x - nu) * np.exp(-x) + 0.0 * t

    def Wt1(t, x):
        return -share * beta_j * np.exp(-x - beta_j * t) + beta_i * k1 * np.exp(-x + beta_i * t)

    def Wt2(t, x):
        return -beta_i * d * e1 * np.exp(-x + beta_i * t)

    def Wt3(t, x):
        return 0.0 * (t + x)

    def piecewise(f1, f2, f3):
        def f(t, x):
            t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
            w = which(t)
            return np.where(w == 0, f1(t, x), np.where(w == 1, f2(t, x), f3(t, x)))
        return f

    def running(t, x):
        return (np.exp(-beta_j * np.minimum(t, psi)) - nu * x) * np.exp(-x)

    seams = tuple(sorted({s for s in (psi, t1) if 0 < s < T}))
    params = {"case": "threshold", "beta_i": beta_i, "beta_j": beta_j, "nu": nu, "psi": psi, "T": T,
              "t1": t1, "kappa1": k1, "branch": 1 if case1 else 2}
    cand = CandidateValue(
        W=piecewise(W1, W2, W3), W_t=piecewise(Wt1, Wt2, Wt3), W_x=piecewise(Wx1, Wx2, Wx3),
        running=running, beta=beta_i, nu=nu, horizon=T, switch_time=t1, seams=seams, params=params,
    )
    object.__setattr__(cand, "pieces", ((W1, Wt1, Wx1), (W2, Wt2, Wx2), (W3, Wt3, Wx3)))
    return cand


def nu_less_margin(beta_i: float, beta_j: float, nu: float, t1: float) -> float:
    """Slack in the condition keeping full effort optimal up to ``t1`` (non-negative when it holds)."""
    s = beta_i + beta_j
    return beta_j / s * math.exp(-beta_j * t1) - (nu - beta_i / s * math.exp(-beta_j * t1))


# ---------------------------------------------------------------------------
# residual


@dataclass(frozen=True)
class ResidualReport:
    max_residual: float
    boundary_error: float
    sign_violations: int
    h_t: float
    h_x: float
    x_max: float
    nodes: int
    excluded: int
    partials: str
    valid: bool = True
    message: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> ResidualReport:
        return cls(**d)


def hjb_residual(W: CandidateValue, h_t: float = 1e-3, h_x: float = 1e-3, x_max: float | None = None,
                 partials: str = "auto", sign_tol: float = 1e-13, chunk: int = 2_000_000) -> ResidualReport:
    """Maximum HJB residual over interior nodes, boundary error and bang-bang sign violations.

    Nodes within one time cell of a seam (where ``W`` is not differentiable in
    ``t``) are excluded.  ``partials`` is ``"closed"``, ``"fd"`` (central
    differences) or ``"auto"`` (closed when the candidate carries them).
    """
    if h_t <= 0 or h_x <= 0:
        raise ValueError("grid spacings must be positive")
    T, beta = W.horizon, W.beta
    if x_max is None:
        x_max = beta * T + 1.0
    if x_max < beta * T:
        raise ValueError("x_max must cover the reachable states [0, beta*T]")
    if partials == "auto":
        partials = "closed" if W.has_partials else "fd"
    if partials == "closed" and not W.has_partials:
        raise ValueError("candidate carries no closed-form partials")

    n_t = max(2, int(round(T / h_t)))
    n_x = max(2, int(round(x_max / h_x)))
    ht, hx = T / n_t, x_max / n_x
    t_nodes = np.linspace(0.0, T, n_t + 1)[1:-1]
    x_nodes = np.linspace(0.0, x_max, n_x + 1)
    x_int = x_nodes[1:-1]

    keep = np.ones(t_nodes.size, dtype=bool)
    for s in W.seams:
        keep &= np.abs(t_nodes - s) > ht * (1 + 1e-9)
    t_kept = t_nodes[keep]
    excluded = int((~keep).sum()) * x_int.size

    max_res = 0.0
    violations = 0
    rows = max(1, chunk // max(1, x_int.size))
    try:
        with np.errstate(over="raise", invalid="raise"):
            g_err = float(np.max(np.abs(W.W(np.full_like(x_nodes, T), x_nodes) - terminal_reward(W.nu, x_nodes))))
            for start in range(0, t_kept.size, rows):
                tt = t_kept[start:start + rows][:, None]
                xx = x_int[None, :]
                if partials == "closed":
                    wt = W.W_t(tt, xx)
                    wx = W.W_x(tt, xx)
                else:
                    wt = (W.W(tt + ht, xx) - W.W(tt - ht, xx)) / (2 * ht)
                    wx = (W.W(tt, xx + hx) - W.W(tt, xx - hx)) / (2 * hx)
                bracket = W.running(tt, xx) + wx
                res = wt + np.maximum(0.0, beta * bracket)
                max_res = max(max_res, float(np.max(np.abs(res))))
                before = np.broadcast_to(tt < W.switch_time, bracket.shape)
                scale = sign_tol * (1.0 + np.abs(W.running(tt, xx)))
                violations += int(np.count_nonzero(before & (bracket < -scale)))
                violations += int(np.count_nonzero(~before & (bracket > scale)))
    except FloatingPointError as exc:
        return ResidualReport(math.inf, math.inf, 0, ht, hx, x_max, 0, excluded, partials, False,
                              f"non-finite candidate evaluation: {exc}")
    if not (math.isfinite(max_res) and math.isfinite(g_err)):
        return ResidualReport(math.inf, math.inf, violations, ht, hx, x_max, 0, excluded, partials, False,
                              "non-finite candidate evaluation")
    return ResidualReport(max_res, g_err, violations, ht, hx, x_max, t_kept.size * x_int.size, excluded, partials)
