import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdmqkd.decoy_bb84 import key_rate_report
from tdmqkd.link_model import LinkParams, system_transmittance
from tdmqkd.sim_engine import binomial_sigma
from tdmqkd.tdm_network import (
    CrosstalkScenario,
    Schedule,
    calibrated,
    crosstalk_run,
    crosstalk_scenarios,
    crosstalk_table,
    interferer_order,
    leakage_yield,
    run_schedule,
)


def user_params(L=20.0):
    return {u: LinkParams(user=u, e_misalign=0.004).at_length(L) for u in range(1, 5)}


@pytest.fixture
def link4():
    return calibrated(LinkParams(user=4).at_length(20), 0.0036)


# --- schedule ----------------------------------------------------------

def test_round_robin_quarter_share():
    params = user_params()
    rep = run_schedule(Schedule.round_robin(), params)
    for u in range(1, 5):
        alone = key_rate_report(params[u]).R_bps
        assert rep.effective_bps[u] == pytest.approx(alone / 4, rel=1e-9)
    assert rep.schedule_efficiency == 1.0
    assert rep.total_bps == pytest.approx(sum(rep.effective_bps.values()))


def test_single_slot_equals_standalone():
    p = user_params()[3]
    rep = run_schedule(Schedule(((3, 10),)), {3: p})
    assert rep.reports[3] == key_rate_report(p)
    assert rep.effective_bps[3] == rep.reports[3].R_bps


def test_dead_time_reduces_efficiency():
    s = Schedule.round_robin(duration=1000, dead=100)
    assert s.n_switches == 4
    assert s.cycle_pulses == 4400
    assert s.dead_share == pytest.approx(400 / 4400)
    rep = run_schedule(s, user_params())
    assert rep.schedule_efficiency == pytest.approx(4000 / 4400)


@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 10_000)), min_size=1, max_size=12),
       st.integers(0, 500))
def test_schedule_conservation(slots, dead):
    s = Schedule(tuple(slots), dead)
    total = sum(s.time_share(u) for u in s.users) + s.dead_share
    assert total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("slots,dead", [((), 0), (((5, 10),), 0), (((1, 0),), 0), (((1, 1),), -1)])
def test_schedule_validation(slots, dead):
    with pytest.raises(ValueError):
        Schedule(slots, dead)


def test_params_rerouted_when_user_differs():
    p = LinkParams(user=1, e_misalign=0.004).at_length(20)
    rep = run_schedule(Schedule.round_robin((1, 4)), {1: p, 4: p})
    assert rep.reports[4].user == 4


def test_schedule_montecarlo_mode():
    s = Schedule.round_robin((1, 2), duration=200_000)
    rep = run_schedule(s, user_params(), "montecarlo", seed=3)
    again = run_schedule(s, user_params(), "montecarlo", seed=3)
    assert rep.reports[1].observables == again.reports[1].observables
    ref = key_rate_report(user_params()[1]).observables.Q_mu
    n_sig = 100_000
    assert abs(rep.reports[1].observables.Q_mu - ref) < 5 * 2 * binomial_sigma(ref / 2, n_sig)


def test_mode_validation():
    with pytest.raises(ValueError):
        run_schedule(Schedule(((1, 10),)), user_params(), "bogus")
    with pytest.raises(ValueError):
        crosstalk_run(CrosstalkScenario(1, frozenset({1})), user_params()[1], mode="bogus")


# --- crosstalk ---------------------------------------------------------

def test_scenario_validation():
    with pytest.raises(ValueError):
        CrosstalkScenario(1, frozenset({2, 3}))
    with pytest.raises(ValueError):
        CrosstalkScenario(1, frozenset({1, 6}))
    sc = CrosstalkScenario(4, frozenset({2, 4, 3}))
    assert sc.interferers == (2, 3)
    assert sc.label == "{2,3,4}"


def test_scenario_sequence():
    assert interferer_order(4) == [3, 2, 1]
    assert interferer_order(1) == [2, 3, 4]
    assert interferer_order(2) == [1, 3, 4]
    sets = [sc.active_users for sc in crosstalk_scenarios(4)]
    assert sets == [frozenset({4}), frozenset({3, 4}), frozenset({2, 3, 4}), frozenset({1, 2, 3, 4})]


def test_leakage_yield_closed_form(link4):
    e = system_transmittance(link4)
    assert leakage_yield(link4, 3, 30) == pytest.approx(3 * (1 - math.exp(-e * 1e-3 * 0.3375)), rel=1e-12)
    assert leakage_yield(link4, 0, 30) == 0
    assert leakage_yield(link4, 3, math.inf) == 0


def test_alone_equals_standalone_exactly(link4):
    r, q = crosstalk_run(CrosstalkScenario(4, frozenset({4})), link4)
    rep = key_rate_report(link4)
    assert (r, q) == (rep.R_per_pulse, rep.qber)


def test_infinite_extinction_no_effect(link4):
    rows = crosstalk_table(link4, 4, math.inf)
    assert len({(r, q) for _, r, q in rows}) == 1


def test_high_extinction_nearly_flat(link4):
    rows = crosstalk_table(link4, 4, 60.0)
    r = np.array([x[1] for x in rows])
    assert np.all(np.abs(r / r[0] - 1) < 1e-3)


@pytest.mark.parametrize("selected", [1, 2, 3, 4])
def test_monotone_in_interferers(link4, selected):
    rows = crosstalk_table(link4.routed(selected), selected, 30.0)
    rates = [r for _, r, _ in rows]
    qbers = [q for _, _, q in rows]
    assert all(a >= b for a, b in zip(rates, rates[1:]))
    assert all(a <= b for a, b in zip(qbers, qbers[1:]))


def test_qber_linear_in_interferers(link4):
    q = np.array([x[2] for x in crosstalk_table(link4, 4, 30.0)])
    first = np.diff(q)
    second = np.diff(q, 2)
    assert np.all(np.abs(second) < 0.1 * np.abs(first[:-1]))


def test_all_four_within_reported_bounds(link4):
    rows = crosstalk_table(link4, 4, 30.0)
    (_, r1, q1), (_, r4, q4) = rows[0], rows[-1]
    assert q4 - q1 <= 0.003
    assert (r1 - r4) / r1 < 0.05
    assert r1 == pytest.approx(0.001489, rel=0.30)


def test_symmetry_user1_vs_user4(link4):
    p1 = calibrated(link4.routed(1), 0.0036)
    q1 = np.array([x[2] for x in crosstalk_table(p1, 1, 30.0)])
    q4 = np.array([x[2] for x in crosstalk_table(link4, 4, 30.0)])
    assert np.allclose(np.diff(q1), np.diff(q4), rtol=0.02)


def test_montecarlo_crosstalk_agrees_with_analytic(link4):
    p = link4.routed(4, er_db=20)
    sc = CrosstalkScenario(4, frozenset({1, 2, 3, 4}))
    _, q_an = crosstalk_run(sc, p, 20.0)
    _, q_mc = crosstalk_run(sc, p, 20.0, "montecarlo", n_pulses=2_000_000, seed=1)
    sifted = 2_000_000 * 0.5 * 0.0095 / 2
    assert abs(q_mc - q_an) < 4 * binomial_sigma(q_an, int(sifted))


def test_calibrated_helper(link4):
    assert key_rate_report(link4).qber == pytest.approx(0.0036, abs=1e-9)
    assert calibrated(link4, 0.005).e_misalign > link4.e_misalign
