import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acqgame.analytic import (
    UtilityReport,
    _one_lock_direct,
    _two_lock_iterated_terms,
    _two_lock_profile_terms,
    contact_density,
    expected_cost,
    opponent_survival,
    silent_value,
    success_prob_one_lock,
    success_prob_two_lock,
    utility,
    utility_one_lock,
    utility_two_lock,
)
from acqgame.model import Control, GameParams, TwoStagePolicy, make_threshold_control
from acqgame.quadrature import adaptive_simpson

E = math.e


def random_control(rng, T, beta, n=8, p_on=0.7):
    bp = np.concatenate(([0.0], np.sort(rng.uniform(0, T, n - 1)), [T]))
    lv = rng.uniform(0, beta, n) * (rng.random(n) < p_on)
    return Control(bp, lv, beta)


def test_contact_density_examples():
    one = Control.constant(1.0, 5.0)
    assert contact_density(one, 0.0) == 1.0
    assert contact_density(one, 1.0) == pytest.approx(math.exp(-1), abs=1e-15)
    assert contact_density(Control.zero(5.0), 2.0) == 0.0


def test_opponent_survival_examples():
    g = make_threshold_control(1.0, 1.0, 3.0)
    assert opponent_survival(Control.zero(3.0), 2.0) == 1.0
    assert opponent_survival(g, 0.5) == pytest.approx(0.6065306597126334, abs=1e-15)
    assert opponent_survival(g, 2.0) == pytest.approx(0.36787944117144233, abs=1e-15)


def test_expected_cost_examples():
    assert expected_cost(Control.zero(1.0), 1.0) == 0.0
    assert expected_cost(Control.constant(1.0, 1.0), 1.0) == pytest.approx(0.6321205588285577, abs=1e-15)
    v = expected_cost(Control.constant(2.0, 10.0), 10.0)
    assert v == pytest.approx(0.999999997938846, abs=1e-15) and v <= 1


def test_expected_cost_matches_quadrature_of_min_tau():
    # E[int_0^{min(tau,U)} a] by quadrature of the density times the running integral
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = random_control(rng, 2.0, 2.0)
        run = adaptive_simpson(lambda s, anc: np.exp(-a.cumulative(s)) * a.cumulative(s) * a.rate(anc), a.breakpoints).value
        tail = a.total * math.exp(-a.total)
        assert expected_cost(a, 2.0) == pytest.approx(run + tail, abs=1e-10)


def test_success_prob_one_lock_examples():
    on = Control.constant(1.0, 1.0)
    assert success_prob_one_lock(Control.zero(1.0), on, 1.0) == 0.0
    assert success_prob_one_lock(on, Control.zero(1.0), 1.0) == pytest.approx(0.6321205588285577, abs=1e-15)
    assert success_prob_one_lock(on, on, 1.0) == pytest.approx(0.43233235838169365, abs=1e-15)


def test_utility_one_lock_examples():
    p = GameParams(1, 1, 0.5, 1)
    on, off = Control.constant(1.0, 1.0), Control.zero(1.0)
    assert utility_one_lock(off, on, p).utility == 0.0
    r = utility_one_lock(on, off, p)
    assert r.utility == pytest.approx(0.31606027941427883, abs=1e-15)
    assert r.utility == pytest.approx(silent_value(1, 0.5, 1, 1).value, abs=1e-12)
    assert utility_one_lock(on, on, p).utility == pytest.approx((1 - E**-2) / 2 - 0.5 * (1 - E**-1), abs=1e-15)


def test_one_lock_symmetric_ne_utility():
    p = GameParams(1, 1, 0.5, 2)
    g = make_threshold_control(math.log(2), 1, 2)
    r = utility_one_lock(g, g, p)
    assert (r.success_prob, r.expected_cost, r.utility) == pytest.approx((0.375, 0.5, 0.125), abs=1e-15)


def test_silent_value_examples():
    assert silent_value(1, 1.5, 1, 2) == (0.0, 0.0)
    v = silent_value(1, 0.5, 1, 1)
    assert v.value == pytest.approx(0.31606027941427883, abs=1e-15) and v.action == 1
    tie = silent_value(1, 1, 2, 3, x=0.7)
    assert tie.value == pytest.approx(-0.7 * math.exp(-0.7), abs=1e-15)
    assert silent_value(1, 1, 2, 3).value == 0.0
    with pytest.raises(ValueError):
        silent_value(1, 0.5, 1, -1)


def test_success_prob_two_lock_examples():
    T = 2.0
    full = TwoStagePolicy(Control.constant(1.0, T, 1.0), Control.constant(1.0, T, 1.0), Control.zero(T))
    silent = Control.zero(T)
    # int_0^2 (1 - e^{-(2-s)}) e^{-s} ds = 1 - 3 e^{-2}
    assert success_prob_two_lock(full, silent, T) == pytest.approx(1 - 3 * E**-2, abs=1e-15)
    assert success_prob_two_lock(full, silent, T) == pytest.approx(0.5939941502901619, abs=1e-15)
    assert success_prob_two_lock(TwoStagePolicy.gamma2(0, 1, T), silent, T) == 0.0
    lazy = TwoStagePolicy(full.stage1, Control.zero(T), Control.zero(T))
    assert success_prob_two_lock(lazy, silent, T) == 0.0


def test_utility_two_lock_examples():
    T = 2.0
    p = GameParams(1, 1, 0.25, T, locks=2)
    full = TwoStagePolicy(Control.constant(1.0, T, 1.0), Control.constant(1.0, T, 1.0), Control.zero(T))
    opp = TwoStagePolicy.gamma2(0, 1, T)
    r = utility_two_lock(full, opp, p)
    assert r.success_prob == pytest.approx(0.5939941502901619, abs=1e-15)
    assert r.expected_cost == pytest.approx((1 - E**-2) + (1 - 3 * E**-2), abs=1e-15)
    assert r.utility == pytest.approx(0.2293294335267746, abs=1e-14)
    assert utility_two_lock(opp, opp, p).utility == 0.0


def test_two_lock_symmetric_ne_utility():
    p = GameParams(1, 1, 0.25, 3, locks=2)
    psi = -math.log(math.exp(-3) + 1 / 3)
    g = TwoStagePolicy.gamma2(psi, 1, 3)
    assert utility(g, g, p).utility == pytest.approx(0.142702664548985, abs=1e-13)


def test_nu_at_least_one_makes_activity_unprofitable():
    rng = np.random.default_rng(11)
    for _ in range(100):
        T = rng.uniform(0.5, 3)
        p = GameParams(rng.uniform(0.2, 3), rng.uniform(0.2, 3), rng.uniform(1.0, 2.0), T, locks=2)
        pi = TwoStagePolicy(random_control(rng, T, p.beta_i), random_control(rng, T, p.beta_i), random_control(rng, T, p.beta_i))
        pj = TwoStagePolicy.gamma2(rng.uniform(0, T), p.beta_j, T)
        assert utility_two_lock(pi, pj, p).utility <= 1e-15


def test_normalisation_against_quadrature():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a = random_control(rng, 3.0, 2.0)
        q = adaptive_simpson(lambda s, anc: np.exp(-a.cumulative(s)) * a.rate(anc), a.breakpoints, tol=1e-12).value
        assert q == pytest.approx(-math.expm1(-a.total), abs=1e-10)


def test_decomposition_identity_1000_pairs():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        T = rng.uniform(0.2, 4)
        p = GameParams(rng.uniform(0.1, 3), rng.uniform(0.1, 3), rng.uniform(0.05, 1.5), T)
        ai, aj = random_control(rng, T, p.beta_i), random_control(rng, T, p.beta_j)
        worst = max(worst, abs(utility_one_lock(ai, aj, p).utility - _one_lock_direct(ai, aj, T, p.nu)))
    assert worst < 1e-12


def test_success_prob_monotone_in_rates():
    rng = np.random.default_rng(9)
    for _ in range(200):
        T = 2.0
        ai, aj = random_control(rng, T, 2.0), random_control(rng, T, 2.0)
        bump = Control(ai.breakpoints, ai.levels + rng.uniform(0, 0.5, ai.levels.size))
        bj = Control(aj.breakpoints, aj.levels + rng.uniform(0, 0.5, aj.levels.size))
        base = success_prob_one_lock(ai, aj, T)
        assert success_prob_one_lock(bump, aj, T) >= base - 1e-15
        assert success_prob_one_lock(ai, bj, T) <= base + 1e-15


def test_two_lock_never_beats_one_lock_probability():
    rng = np.random.default_rng(13)
    for _ in range(200):
        T = rng.uniform(0.3, 3)
        pi = TwoStagePolicy(random_control(rng, T, 2.0), random_control(rng, T, 2.0), random_control(rng, T, 2.0))
        aj = random_control(rng, T, 2.0)
        assert success_prob_two_lock(pi, aj, T) <= success_prob_one_lock(pi.stage1, aj, T) + 1e-15


def test_iterated_path_matches_profile_path():
    rng = np.random.default_rng(17)
    for _ in range(30):
        T = rng.uniform(0.5, 3)
        s, f = random_control(rng, T, 2.0), random_control(rng, T, 2.0)
        pi = TwoStagePolicy(random_control(rng, T, 2.0), s, f)
        callable_pi = TwoStagePolicy(pi.stage1, lambda tau, rem, s=s: s.restrict(rem), lambda tau, rem, f=f: f.restrict(rem))
        aj = random_control(rng, T, 2.0)
        a = _two_lock_profile_terms(pi, aj, T)
        b = _two_lock_iterated_terms(callable_pi, aj, T)
        # Gauss-Legendre on pieces that may contain kinks: agreement to quadrature accuracy
        assert a.success_prob == pytest.approx(b.success_prob, abs=1e-5)
        assert a.stage2_cost == pytest.approx(b.stage2_cost, abs=1e-5)


@given(st.floats(0.05, 3), st.floats(0.05, 0.99), st.floats(0.05, 4))
def test_silent_value_equals_all_on_utility(beta, nu, U):
    p = GameParams(beta, 1.0, nu, U)
    r = utility_one_lock(Control.constant(beta, U), Control.zero(U), p)
    assert r.utility == pytest.approx(silent_value(1, nu, beta, U).value, abs=1e-12)


def test_utility_report_contract():
    r = UtilityReport(0.5, 0.4, 0.3)
    assert UtilityReport.from_dict(r.to_dict()) == r
    assert "stderr" not in r.to_dict()
    with pytest.raises(ValueError):
        UtilityReport(0.5, 0.4, 0.3, "closed_form", stderr=0.1)
    with pytest.raises(ValueError):
        UtilityReport(0.5, 0.4, 0.3, "guess")
    mc = UtilityReport(0.5, 0.4, 0.3, "monte_carlo", 0.01, 0.01, 0.01, 100)
    assert UtilityReport.from_dict(mc.to_dict()) == mc
