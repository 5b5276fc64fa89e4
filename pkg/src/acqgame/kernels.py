"""Hot loops: batched episode simulation and exhaustive level-vector search.

Every kernel exists twice, as a numba loop (``*_nb``) and as a vectorised
numpy function (``*_np``).  The public wrappers dispatch on
:func:`acqgame._accel.backend` unless a backend is passed explicitly.  Both
paths consume the same pre-drawn random numbers, so their outputs agree.

Controls are passed packed: for ``n`` controls, arrays ``bp`` (breakpoints),
``kn`` (cumulative rate at breakpoints) and ``lv`` (levels), padded with
``inf``, the final cumulative value and ``0`` respectively, plus ``nseg``.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from . import _accel
from ._accel import njit
from .model import Control

# ---------------------------------------------------------------------------
# packing


class Packed(NamedTuple):
    bp: np.ndarray
    kn: np.ndarray
    lv: np.ndarray
    nseg: np.ndarray


def pack(controls: Sequence[Control]) -> Packed:
    n = len(controls)
    width = max(c.levels.size for c in controls)
    bp = np.full((n, width + 1), np.inf)
    kn = np.empty((n, width + 1))
    lv = np.zeros((n, width))
    nseg = np.empty(n, dtype=np.int64)
    for k, c in enumerate(controls):
        m = c.levels.size
        bp[k, : m + 1] = c.breakpoints
        kn[k, : m + 1] = c.knots
        kn[k, m + 1:] = c.knots[-1]
        lv[k, :m] = c.levels
        nseg[k] = m
    return Packed(bp, kn, lv, nseg)


# ---------------------------------------------------------------------------
# episode simulation


@njit
def _inverse_nb(bp, kn, lv, m, y):
    """First time the integrated rate reaches ``y``; inf if it never does."""
    if y >= kn[m]:
        return math.inf
    lo, hi = 0, m
    while hi - lo > 1:  # largest k with kn[k] <= y
        mid = (lo + hi) // 2
        if kn[mid] <= y:
            lo = mid
        else:
            hi = mid
    return bp[lo] + (y - kn[lo]) / lv[lo]


@njit
def _cumulative_nb(bp, kn, lv, m, t):
    if t <= 0.0:
        return 0.0
    if t >= bp[m]:
        return kn[m]
    lo, hi = 0, m
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bp[mid] <= t:
            lo = mid
        else:
            hi = mid
    return kn[lo] + lv[lo] * (t - bp[lo])


@njit
def _simulate_nb(T, locks, bp1, kn1, lv1, n1, bps, kns, lvs, ns, bpf, knf, lvf, nf, E1, U, E2):
    n_agents, reps = E1.shape
    tau1 = np.empty((n_agents, reps))
    tau2 = np.full((n_agents, reps), np.inf)
    cost = np.empty((n_agents, reps))
    reward = np.zeros((n_agents, reps))
    winner = np.full(reps, -1, dtype=np.int64)
    for r in range(reps):
        best = math.inf
        best_u = math.inf
        w = -1
        for k in range(n_agents):
            t = _inverse_nb(bp1[k], kn1[k], lv1[k], n1[k], E1[k, r])
            if t >= T:
                t = math.inf
            tau1[k, r] = t
            cost[k, r] = _cumulative_nb(bp1[k], kn1[k], lv1[k], n1[k], min(t, T))
            if t < best or (t == best and t < math.inf and U[k, r] < best_u):
                best = t
                best_u = U[k, r]
                w = k
        winner[r] = w
        if locks == 1:
            if w >= 0:
                reward[w, r] = 1.0
            continue
        for k in range(n_agents):
            t = tau1[k, r]
            if t == math.inf:
                continue
            rem = T - t
            if k == w:
                s = _inverse_nb(bps[k], kns[k], lvs[k], ns[k], E2[k, r])
                cost[k, r] += _cumulative_nb(bps[k], kns[k], lvs[k], ns[k], min(s, rem))
            else:
                s = _inverse_nb(bpf[k], knf[k], lvf[k], nf[k], E2[k, r])
                cost[k, r] += _cumulative_nb(bpf[k], knf[k], lvf[k], nf[k], min(s, rem))
            if s < rem:
                tau2[k, r] = t + s
                if k == w:
                    reward[k, r] = 1.0
    return tau1, tau2, cost, reward, winner


def _inverse_np(P: Packed, k: int, y: np.ndarray) -> np.ndarray:
    m = P.nseg[k]
    kn, bp, lv = P.kn[k, : m + 1], P.bp[k, : m + 1], P.lv[k, :m]
    idx = np.clip(np.searchsorted(kn, y, side="right") - 1, 0, m - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = bp[idx] + (y - kn[idx]) / lv[idx]
    return np.where(y >= kn[m], np.inf, t)


def _cumulative_np(P: Packed, k: int, t: np.ndarray) -> np.ndarray:
    m = P.nseg[k]
    kn, bp, lv = P.kn[k, : m + 1], P.bp[k, : m + 1], P.lv[k, :m]
    tc = np.clip(t, 0.0, bp[m])
    idx = np.clip(np.searchsorted(bp, tc, side="right") - 1, 0, m - 1)
    return kn[idx] + lv[idx] * (tc - bp[idx])


def _simulate_np(T, locks, P1: Packed, PS: Packed, PF: Packed, E1, U, E2):
    n_agents, reps = E1.shape
    tau1 = np.empty((n_agents, reps))
    cost = np.empty((n_agents, reps))
    for k in range(n_agents):
        t = _inverse_np(P1, k, E1[k])
        t[t >= T] = np.inf
        tau1[k] = t
        cost[k] = _cumulative_np(P1, k, np.minimum(t, T))
    best = tau1.min(axis=0)
    contenders = (tau1 == best) & np.isfinite(best)
    u = np.where(contenders, U, np.inf)
    winner = np.where(np.isfinite(best), np.argmin(u, axis=0), -1).astype(np.int64)
    reward = np.zeros((n_agents, reps))
    tau2 = np.full((n_agents, reps), np.inf)
    if locks == 1:
        has = winner >= 0
        reward[winner[has], np.flatnonzero(has)] = 1.0
        return tau1, tau2, cost, reward, winner
    for k in range(n_agents):
        t = tau1[k]
        active = np.isfinite(t)
        won = active & (winner == k)
        rem = T - t
        s = np.full(reps, np.inf)
        s[won] = _inverse_np(PS, k, E2[k, won])
        lost = active & ~won
        s[lost] = _inverse_np(PF, k, E2[k, lost])
        c2 = np.zeros(reps)
        c2[won] = _cumulative_np(PS, k, np.minimum(s[won], rem[won]))
        c2[lost] = _cumulative_np(PF, k, np.minimum(s[lost], rem[lost]))
        cost[k] += c2
        hit = active & (s < rem)
        tau2[k, hit] = t[hit] + s[hit]
        reward[k, hit & won] = 1.0
    return tau1, tau2, cost, reward, winner


def simulate_block(T: float, locks: int, P1: Packed, PS: Packed, PF: Packed, E1, U, E2, backend: str | None = None):
    """Simulate ``E1.shape[1]`` episodes for ``E1.shape[0]`` agents.

    Returns ``(tau1, tau2, cost, reward, winner)``: stage-one contact times
    (``inf`` when none before ``T``), absolute stage-two contact times, realised
    costs, rewards and the lock-one winner per episode (``-1`` for none).
    """
    backend = backend or _accel.backend()
    if backend == "numba":
        if not _accel.HAVE_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        return _simulate_nb(float(T), int(locks), *P1, *PS, *PF, E1, U, E2)
    return _simulate_np(float(T), int(locks), P1, PS, PF, E1, U, E2)


# ---------------------------------------------------------------------------
# exhaustive search over level vectors


@njit
def _enumerate_nb(phi, decay):
    """Best level vector by exhaustive lexicographic enumeration.

    ``phi[k, l]`` is the discounted gain of level ``l`` on segment ``k`` given
    no contact before it, ``decay[k, l]`` the survival factor across it.
    """
    n, L = phi.shape
    total = L**n
    digits = np.zeros(n, dtype=np.int64)
    best = -math.inf
    best_idx = 0
    for idx in range(total):
        v = 0.0
        s = 1.0
        for k in range(n):
            d = digits[k]
            v += s * phi[k, d]
            s *= decay[k, d]
        if v > best:
            best = v
            best_idx = idx
        k = n - 1
        while k >= 0:
            digits[k] += 1
            if digits[k] < L:
                break
            digits[k] = 0
            k -= 1
    out = np.empty(n, dtype=np.int64)
    rem = best_idx
    for k in range(n - 1, -1, -1):
        out[k] = rem % L
        rem //= L
    return out, best


def _enumerate_np(phi, decay, chunk: int = 1 << 16):
    n, L = phi.shape
    total = L**n
    powers = L ** np.arange(n - 1, -1, -1, dtype=np.int64)
    best, best_idx = -np.inf, 0
    seg = np.arange(n)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % L
        d = decay[seg, digits]
        surv = np.concatenate((np.ones((idx.size, 1)), np.cumprod(d[:, :-1], axis=1)), axis=1)
        v = np.sum(surv * phi[seg, digits], axis=1)
        j = int(np.argmax(v))
        if v[j] > best:
            best, best_idx = float(v[j]), int(idx[j])
    out = (best_idx // powers) % L
    return out.astype(np.int64), best


def enumerate_levels(phi: np.ndarray, decay: np.ndarray, backend: str | None = None):
    """Exhaustive argmax over all level vectors; ties go to the lexicographically first."""
    phi = np.ascontiguousarray(phi, dtype=float)
    decay = np.ascontiguousarray(decay, dtype=float)
    backend = backend or _accel.backend()
    if backend == "numba":
        if not _accel.HAVE_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        idx, val = _enumerate_nb(phi, decay)
    else:
        idx, val = _enumerate_np(phi, decay)
    return np.asarray(idx), float(val)
