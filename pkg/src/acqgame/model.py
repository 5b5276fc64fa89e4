"""Domain types: game parameters, piecewise-constant rate controls and policies."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np


class ParameterError(ValueError):
    """Raised when a parameter violates its domain; the message names the field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name} {message}")
        self.field = field_name


@dataclass(frozen=True)
class GameParams:
    beta_i: float
    beta_j: float
    nu: float
    horizon: float
    locks: int = 1
    n_agents: int = 2

    def __post_init__(self):
        validate_params(self)
        for name in ("beta_i", "beta_j", "nu", "horizon"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "locks", int(self.locks))
        object.__setattr__(self, "n_agents", int(self.n_agents))

    @property
    def T(self) -> float:
        return self.horizon

    def swapped(self) -> GameParams:
        """Same game seen from the other agent."""
        return replace(self, beta_i=self.beta_j, beta_j=self.beta_i)

    def to_dict(self) -> dict:
        return {
            "beta_i": self.beta_i,
            "beta_j": self.beta_j,
            "nu": self.nu,
            "horizon": self.horizon,
            "locks": self.locks,
            "n_agents": self.n_agents,
        }


def _positive(value, name: str) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
        raise ParameterError(name, f"must be a real number, got {value!r}")
    if not math.isfinite(value) or value <= 0:
        raise ParameterError(name, "must be positive")


def validate_params(raw: GameParams) -> GameParams:
    """Check every GameParams invariant and return ``raw`` unchanged."""
    _positive(raw.beta_i, "beta_i")
    _positive(raw.beta_j, "beta_j")
    _positive(raw.nu, "nu")
    _positive(raw.horizon, "horizon")
    if raw.locks not in (1, 2) or isinstance(raw.locks, bool):
        raise ParameterError("locks", "must be 1 or 2")
    if isinstance(raw.n_agents, bool) or not isinstance(raw.n_agents, (int, np.integer)) or raw.n_agents < 2:
        raise ParameterError("n_agents", "must be an integer >= 2")
    return raw


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PiecewiseConstantControl:
    """Open-loop rate process, constant on ``[breakpoints[k], breakpoints[k+1])``.

    The control is zero outside ``[0, span)``.  ``bound``, when given, is the
    owning agent's maximum rate and every level must lie in ``[0, bound]``.
    """

    breakpoints: np.ndarray
    levels: np.ndarray
    bound: float | None = None
    _knots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        bp = _frozen(self.breakpoints)
        lv = _frozen(self.levels)
        if bp.ndim != 1 or lv.ndim != 1 or bp.size != lv.size + 1 or lv.size == 0:
            raise ValueError("need len(breakpoints) == len(levels) + 1 >= 2")
        if bp[0] != 0.0:
            raise ValueError("breakpoints must start at 0")
        if not np.all(np.diff(bp) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(lv)) or np.any(lv < 0):
            raise ValueError("levels must be finite and non-negative")
        if self.bound is not None and np.any(lv > self.bound * (1 + 1e-12)):
            raise ValueError(f"levels exceed the rate bound {self.bound}")
        knots = np.concatenate(([0.0], np.cumsum(lv * np.diff(bp))))
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "_knots", _frozen(knots))

    # -- constructors -------------------------------------------------
    @classmethod
    def constant(cls, rate: float, span: float, bound: float | None = None) -> PiecewiseConstantControl:
        return cls([0.0, span], [rate], bound)

    @classmethod
    def zero(cls, span: float) -> PiecewiseConstantControl:
        return cls([0.0, span], [0.0])

    @classmethod
    def uniform(cls, levels, span: float, bound: float | None = None) -> PiecewiseConstantControl:
        """Equal-width segments on ``[0, span]``."""
        levels = np.asarray(levels, dtype=float)
        return cls(np.linspace(0.0, span, levels.size + 1), levels, bound)

    # -- evaluation ---------------------------------------------------
    @property
    def span(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def knots(self) -> np.ndarray:
        """Cumulative rate at each breakpoint."""
        return self._knots

    @property
    def total(self) -> float:
        return float(self._knots[-1])

    def segment_index(self, t) -> np.ndarray:
        """Index of the segment containing ``t`` (right-continuous convention)."""
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        return np.clip(idx, 0, self.levels.size - 1)

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        out = self.levels[self.segment_index(t)]
        out = np.where((t < 0) | (t >= self.span), 0.0, out)
        return out if out.ndim else float(out)

    __call__ = rate

    def cumulative(self, t):
        """Integrated rate up to ``min(t, span)``."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.span)
        k = self.segment_index(t)
        out = self._knots[k] + self.levels[k] * (t - self.breakpoints[k])
        return out if out.ndim else float(out)

    def inverse_cumulative(self, y):
        """Earliest time at which the integrated rate reaches ``y``; ``inf`` if never."""
        y = np.asarray(y, dtype=float)
        k = np.searchsorted(self._knots, y, side="left") - 1
        k = np.clip(k, 0, self.levels.size - 1)
        lv = self.levels[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self.breakpoints[k] + np.where(lv > 0, (y - self._knots[k]) / lv, 0.0)
        t = np.where(y >= self.total, np.inf, np.where(y <= 0, 0.0, t))
        if self.total > 0:
            t = np.where(y == self.total, self.breakpoints[np.flatnonzero(self.levels > 0)[-1] + 1], t)
        return t if t.ndim else float(t)

    def restrict(self, span: float) -> PiecewiseConstantControl:
        """Same control truncated (or zero-extended) to ``[0, span]``."""
        if span <= 0:
            raise ValueError("span must be positive")
        bp = self.breakpoints
        if span >= self.span:
            if span == self.span:
                return self
            return PiecewiseConstantControl(np.append(bp, span), np.append(self.levels, 0.0), self.bound)
        n = int(np.searchsorted(bp, span, side="left"))
        return PiecewiseConstantControl(np.append(bp[:n], span), self.levels[:n], self.bound)

    def shift(self, start: float) -> PiecewiseConstantControl:
        """The remainder of the control after ``start``, re-based to time zero."""
        if not 0 <= start < self.span:
            raise ValueError("start must lie in [0, span)")
        k = int(self.segment_index(start))
        bp = np.concatenate(([0.0], self.breakpoints[k + 1:] - start))
        return PiecewiseConstantControl(bp, self.levels[k:], self.bound)

    def is_bang_bang(self, beta: float, tol: float = 1e-12) -> bool:
        lv = self.levels
        return bool(np.all((np.abs(lv) <= tol) | (np.abs(lv - beta) <= tol * max(beta, 1.0))))

    def switch_time(self) -> float | None:
        """For an on-then-off control, the time it switches off; ``None`` otherwise."""
        on = self.levels > 0
        if not on.any():
            return 0.0
        last = int(np.flatnonzero(on)[-1])
        if not on[: last + 1].all():
            return None
        if np.ptp(self.levels[: last + 1]) > 0:
            return None
        return float(self.breakpoints[last + 1])

    def __eq__(self, other):
        if not isinstance(other, PiecewiseConstantControl):
            return NotImplemented
        return (
            np.array_equal(self.breakpoints, other.breakpoints)
            and np.array_equal(self.levels, other.levels)
            and self.bound == other.bound
        )

    def __hash__(self):
        return hash((self.breakpoints.tobytes(), self.levels.tobytes(), self.bound))

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "levels": self.levels.tolist(), "bound": self.bound}

    @classmethod
    def from_dict(cls, d: dict) -> PiecewiseConstantControl:
        return cls(d["breakpoints"], d["levels"], d.get("bound"))


Control = PiecewiseConstantControl


def cumulative_rate(a: PiecewiseConstantControl, t: float) -> float:
    """Integrated rate of ``a`` over ``[0, t]`` (zero extension past its span)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return a.cumulative(t)


def merge_breakpoints(*controls: PiecewiseConstantControl, span: float | None = None) -> np.ndarray:
    """Sorted union of breakpoints of ``controls`` clipped to ``[0, span]``."""
    if span is None:
        span = max(c.span for c in controls)
    pts = np.concatenate([c.breakpoints for c in controls] + [np.array([0.0, span])])
    pts = np.unique(pts[(pts >= 0) & (pts <= span)])
    return pts


def make_threshold_control(psi: float, beta: float, span: float) -> PiecewiseConstantControl:
    """Rate ``beta`` on ``[0, psi)`` and zero on ``[psi, span]``."""
    if beta < 0 or span <= 0:
        raise ValueError("beta must be non-negative and span positive")
    if psi < 0 or psi > span:
        raise ValueError(f"psi={psi} must lie in [0, span={span}]")
    if psi == 0:
        return PiecewiseConstantControl([0.0, span], [0.0], beta)
    if psi == span:
        return PiecewiseConstantControl([0.0, span], [beta], beta)
    return PiecewiseConstantControl([0.0, psi, span], [beta, 0.0], beta)


# ---------------------------------------------------------------------------
# Policies


@dataclass(frozen=True)
class ThresholdPolicy:
    """Full rate ``rate`` until ``psi``, silent afterwards."""

    psi: float
    rate: float

    def __post_init__(self):
        if self.psi < 0 or self.rate <= 0:
            raise ValueError("need psi >= 0 and rate > 0")

    def control(self, span: float) -> PiecewiseConstantControl:
        return make_threshold_control(min(self.psi, span), self.rate, span)

    def to_dict(self) -> dict:
        return {"kind": "threshold", "psi": self.psi, "rate": self.rate}


# A continuation is either a fixed rate profile in time-since-contact (used
# truncated to the remaining horizon) or a map ``(tau, remaining) -> control``.
Continuation = Union[PiecewiseConstantControl, Callable[[float, float], PiecewiseConstantControl]]


def continuation_control(cont: Continuation, tau: float, horizon: float) -> PiecewiseConstantControl | None:
    """Stage-two control chosen after a first contact at ``tau``; ``None`` if no time is left."""
    remaining = horizon - tau
    if remaining <= 0:
        return None
    if isinstance(cont, PiecewiseConstantControl):
        return cont.restrict(remaining)
    ctrl = cont(tau, remaining)
    if ctrl.span != remaining:
        ctrl = ctrl.restrict(remaining)
    return ctrl


@dataclass(frozen=True, eq=False)
class TwoStagePolicy:
    """Open-loop control until the first contact, then a flag-dependent continuation.

    The continuation sees only the agent's own flag and contact time, which is
    all the information the agent has.
    """

    stage1: PiecewiseConstantControl
    on_success: Continuation
    on_failure: Continuation
    psi: float | None = None  # set for the canonical threshold family

    @classmethod
    def gamma2(cls, psi: float, beta: float, horizon: float) -> TwoStagePolicy:
        """Threshold ``psi`` at start, full effort after a success, silence after a failure."""
        return cls(
            stage1=make_threshold_control(min(psi, horizon), beta, horizon),
            on_success=PiecewiseConstantControl.constant(beta, horizon, beta),
            on_failure=PiecewiseConstantControl.zero(horizon),
            psi=float(psi),
        )

    @property
    def horizon(self) -> float:
        return self.stage1.span

    @property
    def is_profile(self) -> bool:
        """True when both continuations are fixed profiles (fast paths apply)."""
        return isinstance(self.on_success, PiecewiseConstantControl) and isinstance(
            self.on_failure, PiecewiseConstantControl
        )

    def success_control(self, tau: float) -> PiecewiseConstantControl | None:
        return continuation_control(self.on_success, tau, self.horizon)

    def failure_control(self, tau: float) -> PiecewiseConstantControl | None:
        return continuation_control(self.on_failure, tau, self.horizon)

    def to_dict(self) -> dict:
        if self.psi is not None:
            return {"kind": "gamma2", "psi": self.psi, "rate": float(self.stage1.bound)}
        if not self.is_profile:
            raise TypeError("callable continuations are not serialisable")
        return {
            "kind": "two_stage",
            "stage1": self.stage1.to_dict(),
            "on_success": self.on_success.to_dict(),
            "on_failure": self.on_failure.to_dict(),
        }


def policy_to_dict(policy) -> dict:
    if isinstance(policy, PiecewiseConstantControl):
        return {"kind": "control", **policy.to_dict()}
    return policy.to_dict()


def policy_from_dict(d: dict, horizon: float):
    kind = d["kind"]
    if kind == "control":
        return Control.from_dict(d)
    if kind == "threshold":
        return ThresholdPolicy(d["psi"], d["rate"])
    if kind == "gamma2":
        return TwoStagePolicy.gamma2(d["psi"], d["rate"], horizon)
    if kind == "two_stage":
        return TwoStagePolicy(
            Control.from_dict(d["stage1"]), Control.from_dict(d["on_success"]), Control.from_dict(d["on_failure"])
        )
    raise ValueError(f"unknown policy kind {kind!r}")


class Flag(str, enum.Enum):
    START = "start"
    SUCCESS = "success"
    FAILURE = "failure"


@dataclass(frozen=True)
class StageState:
    flag: Flag
    contact_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "flag", Flag(self.flag))
        if self.flag is Flag.START and self.contact_time != 0:
            raise ValueError("start state carries no contact time")
        if self.contact_time < 0:
            raise ValueError("contact_time must be non-negative")

    @property
    def stage(self) -> int:
        return 1 if self.flag is Flag.START else 2
