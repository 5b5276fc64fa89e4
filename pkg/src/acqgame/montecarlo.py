"""Exact simulation of the acquisition game with per-agent Poisson contact clocks.

Random numbers are drawn in fixed-size blocks.  Block ``b`` of replica
``stream`` uses ``PCG64(SeedSequence(seed, spawn_key=(stream, b)))``.  Each
block draws, in order, stage-one exponentials, tie-break uniforms and
stage-two exponentials, each of shape ``(n_agents, block_reps)``.  The
results are therefore a function of ``(seed, stream, reps)`` only.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .analytic import UtilityReport
from .model import Control, GameParams, ThresholdPolicy, TwoStagePolicy

SEED_ENV = "ACQGAME_SEED"
DEFAULT_SEED = 42
BLOCK = 1 << 16


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_SEED
    seed = int(raw, 0)
    if not 0 <= seed < 2**64:
        raise ValueError(f"{SEED_ENV} must be a 64-bit unsigned integer")
    return seed


@dataclass(frozen=True)
class RngSpec:
    seed: int = DEFAULT_SEED
    stream: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.stream) < 0:
            raise ValueError("stream must be non-negative")

    @classmethod
    def from_env(cls, stream: int = 0) -> RngSpec:
        return cls(default_seed(), stream)

    def generator(self, block: int = 0) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream), int(block)))))


@dataclass(frozen=True)
class EpisodeOutcome:
    contact_times: tuple[float, ...]  # lock one; inf when no contact before T
    lock2_times: tuple[float, ...]  # absolute; inf when none
    lock1_success: tuple[bool, ...]
    lock2_success: tuple[bool, ...]
    costs: tuple[float, ...]
    rewards: tuple[float, ...]
    winner: int | None


# ---------------------------------------------------------------------------
# policies


def as_two_stage(policy, p: GameParams, agent_beta: float) -> TwoStagePolicy:
    """Normalise any supported policy description to a two-stage policy."""
    T = p.horizon
    if isinstance(policy, TwoStagePolicy):
        return policy
    if isinstance(policy, ThresholdPolicy):
        return TwoStagePolicy.gamma2(policy.psi, policy.rate, T)
    if isinstance(policy, Control):
        ctrl = policy.restrict(T) if policy.span != T else policy
        return TwoStagePolicy(ctrl, Control.constant(agent_beta, T, agent_beta), Control.zero(T))
    raise TypeError(f"unsupported policy {policy!r}")


def agent_betas(p: GameParams, n: int) -> list[float]:
    """Rate bounds by agent index: agent 0 is ``i``, every other agent ``j``."""
    return [p.beta_i] + [p.beta_j] * (n - 1)


def _stage1(pi: TwoStagePolicy, T: float) -> Control:
    s = pi.stage1
    return s if s.span == T else s.restrict(T)


def sample_contact_time(a: Control, rng: np.random.Generator, size=None):
    """First event of a Poisson clock with rate ``a``; ``inf`` if none within its span.

    A single unit exponential ``E`` is mapped through the inverse integrated
    rate.  This equals segment-by-segment exponential sampling by memorylessness.
    """
    e = rng.standard_exponential(size)
    return a.inverse_cumulative(e)


# ---------------------------------------------------------------------------
# simulation


def _draws(rng: np.random.Generator, n: int, reps: int):
    E1 = rng.standard_exponential((n, reps))
    U = rng.random((n, reps))
    E2 = rng.standard_exponential((n, reps))
    return E1, U, E2


def _simulate_callable(pis: Sequence[TwoStagePolicy], T: float, locks: int, E1, U, E2):
    """Stage-one kernel plus per-contact continuation lookup in Python."""
    n, reps = E1.shape
    P1 = kernels.pack([_stage1(pi, T) for pi in pis])
    zero = kernels.pack([Control.zero(T)] * n)
    tau1, _, cost, _, winner = kernels.simulate_block(T, 1, P1, zero, zero, E1, U, E2)
    reward = np.zeros((n, reps))
    tau2 = np.full((n, reps), np.inf)
    if locks == 1:
        has = winner >= 0
        reward[winner[has], np.flatnonzero(has)] = 1.0
        return tau1, tau2, cost, reward, winner
    for k, pi in enumerate(pis):
        for r in np.flatnonzero(np.isfinite(tau1[k])):
            t = float(tau1[k, r])
            won = winner[r] == k
            ctrl = pi.success_control(t) if won else pi.failure_control(t)
            if ctrl is None:
                continue
            s = ctrl.inverse_cumulative(E2[k, r])
            rem = T - t
            cost[k, r] += ctrl.cumulative(min(s, rem))
            if s < rem:
                tau2[k, r] = t + s
                if won:
                    reward[k, r] = 1.0
    return tau1, tau2, cost, reward, winner


def _run(pis: Sequence[TwoStagePolicy], p: GameParams, E1, U, E2, backend=None):
    T = p.horizon
    if all(pi.is_profile for pi in pis):
        P1 = kernels.pack([_stage1(pi, T) for pi in pis])
        PS = kernels.pack([pi.on_success for pi in pis])
        PF = kernels.pack([pi.on_failure for pi in pis])
        return kernels.simulate_block(T, p.locks, P1, PS, PF, E1, U, E2, backend)
    return _simulate_callable(pis, T, p.locks, E1, U, E2)


def _normalise(policies, p: GameParams) -> list[TwoStagePolicy]:
    n = len(policies)
    if n < 2:
        raise ValueError("need at least two agents")
    betas = agent_betas(p, n)
    return [as_two_stage(pol, p, b) for pol, b in zip(policies, betas)]


def simulate_episode(policies, p: GameParams, rng: np.random.Generator) -> EpisodeOutcome:
    """One episode; the draws match block 0 of :func:`estimate_utilities` with ``reps=1``."""
    pis = _normalise(policies, p)
    E1, U, E2 = _draws(rng, len(pis), 1)
    tau1, tau2, cost, reward, winner = _run(pis, p, E1, U, E2)
    w = int(winner[0])
    return EpisodeOutcome(
        contact_times=tuple(float(x) for x in tau1[:, 0]),
        lock2_times=tuple(float(x) for x in tau2[:, 0]),
        lock1_success=tuple(k == w for k in range(len(pis))),
        lock2_success=tuple(bool(np.isfinite(x)) and k == w for k, x in enumerate(tau2[:, 0])),
        costs=tuple(float(x) for x in cost[:, 0]),
        rewards=tuple(float(x) for x in reward[:, 0]),
        winner=None if w < 0 else w,
    )


class _Moments:
    """Per-agent running sums, accumulated block by block in a fixed order."""

    def __init__(self, n: int):
        self.n = 0
        self.sums = {k: np.zeros(n) for k in ("r", "c", "u", "rr", "cc", "uu")}

    def add(self, reward, cost, nu):
        u = reward - nu * cost
        for key, x in (("r", reward), ("c", cost), ("u", u)):
            self.sums[key] += np.sum(x, axis=1)
            self.sums[key + key] += np.sum(x * x, axis=1)
        self.n += reward.shape[1]

    def stats(self, key):
        n = self.n
        mean = self.sums[key] / n
        if n < 2:
            return mean, np.zeros_like(mean)
        var = np.maximum(self.sums[key + key] - n * mean * mean, 0.0) / (n - 1)
        return mean, np.sqrt(var / n)


def _blocks(reps: int, block: int):
    for b, start in enumerate(range(0, reps, block)):
        yield b, min(block, reps - start)


def estimate_utilities(policies, p: GameParams, reps: int, rng_spec: RngSpec | None = None,
                       block: int = BLOCK, backend: str | None = None) -> list[UtilityReport]:
    """Per-agent sample means of reward minus ``nu`` times cost, with standard errors."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    rng_spec = rng_spec or RngSpec.from_env()
    pis = _normalise(policies, p)
    acc = _Moments(len(pis))
    for b, m in _blocks(reps, block):
        E1, U, E2 = _draws(rng_spec.generator(b), len(pis), m)
        _, _, cost, reward, _ = _run(pis, p, E1, U, E2, backend)
        acc.add(reward, cost, p.nu)
    (r, r_se), (c, c_se), (u, u_se) = acc.stats("r"), acc.stats("c"), acc.stats("u")
    return [
        UtilityReport(float(r[k]), float(c[k]), float(u[k]), "monte_carlo", float(u_se[k]), float(r_se[k]), float(c_se[k]), reps)
        for k in range(len(pis))
    ]


@dataclass(frozen=True)
class DeviationResult:
    deviation: object
    gain: float  # mean of J(deviation) - J(profile) for agent 0
    stderr: float
    profitable: bool  # gain > z * stderr


def deviation_gains(profile, deviations, p: GameParams, reps: int, rng_spec: RngSpec | None = None,
                    z: float = 3.0, block: int = BLOCK) -> list[DeviationResult]:
    """Paired (common random numbers) estimates of agent 0's gain from each deviation."""
    rng_spec = rng_spec or RngSpec.from_env()
    base = _normalise(profile, p)
    devs = [_normalise([d] + list(profile[1:]), p)[0] for d in deviations]
    n = len(base)
    s1 = np.zeros(len(devs))
    s2 = np.zeros(len(devs))
    for b, m in _blocks(reps, block):
        E1, U, E2 = _draws(rng_spec.generator(b), n, m)
        _, _, c0, r0, _ = _run(base, p, E1, U, E2)
        u0 = r0[0] - p.nu * c0[0]
        for d, pi in enumerate(devs):
            _, _, c, r, _ = _run([pi] + base[1:], p, E1, U, E2)
            diff = r[0] - p.nu * c[0] - u0
            s1[d] += diff.sum()
            s2[d] += (diff * diff).sum()
    mean = s1 / reps
    var = np.maximum(s2 - reps * mean * mean, 0.0) / max(reps - 1, 1)
    se = np.sqrt(var / reps)
    return [DeviationResult(dv, float(g), float(s), bool(g > z * s)) for dv, g, s in zip(deviations, mean, se)]


def ks_contact_times(a: Control, n: int, rng: np.random.Generator):
    """KS test of sampled contact times against ``1 - exp(-abar(t))`` on ``[0, span]``.

    The law has an atom at ``inf`` (no contact); it is handled by censoring:
    the finite samples are compared with the conditional law given contact.
    """
    from scipy import stats

    t = sample_contact_time(a, rng, n)
    finite = t[np.isfinite(t)]
    mass = -math.expm1(-a.total)
    return stats.kstest(finite, lambda x: -np.expm1(-a.cumulative(x)) / mass)
