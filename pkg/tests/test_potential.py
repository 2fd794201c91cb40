import numpy as np

from helpers import MATRIX, lane_charge_deviation, random_fleet, unilateral
from wclgame.models import ChargingPlan, ev_cost, potential_value


def test_selection_change_congestion_identity():
    rng = np.random.default_rng(10)
    for _ in range(300):
        evs, wcls, params, plans = random_fleet(rng)
        dj, dphi = unilateral(rng, evs, wcls, params, plans, "selection")
        assert abs(dj[1] - dphi[1]) <= 1e-9
        assert abs(dj[2] - dphi[2]) <= 1e-9


def test_self_term_identity():
    rng = np.random.default_rng(11)
    for _ in range(300):
        evs, wcls, params, plans = random_fleet(rng)
        dj, dphi = unilateral(rng, evs, wcls, params, plans, "self")
        assert abs(dj[2] - dphi[2]) <= 1e-9
        assert dj[1] == dphi[1] == 0


def test_lane_charge_sign_agreement():
    rng = np.random.default_rng(12)
    checked = 0
    while checked < 300:
        evs, wcls, params, plans = random_fleet(rng)
        out = lane_charge_deviation(rng, evs, wcls, params, plans)
        if out is None:
            continue
        dj, dphi = out
        assert np.sign(dj) == np.sign(dphi) or (abs(dj) <= 1e-9 and abs(dphi) <= 1e-9)
        checked += 1


def test_potential_minus_cost_ignores_own_action():
    # Phi - J_i changes with EV i's action only through terms that move together
    rng = np.random.default_rng(13)
    for _ in range(100):
        evs, wcls, params, plans = random_fleet(rng, max_evs=1)
        ev = evs[0]
        sold = plans[0].charge
        flow = plans[0].selection
        gap = potential_value(evs, plans, wcls, params, MATRIX) - ev_cost(ev, plans[0], sold, flow, wcls,
                                                                           params, MATRIX)
        assert abs(gap) <= 1e-9


def test_multi_lane_quantity_changes_reported():
    """Simultaneous changes on several lanes have no proven sign link; only count disagreements."""
    rng = np.random.default_rng(14)
    agree = total = 0
    for _ in range(300):
        evs, wcls, params, plans = random_fleet(rng)
        i = int(rng.integers(0, len(evs)))
        charge = np.where(plans[i].selection == 1, rng.uniform(0, 0.6, len(wcls)), 0.0)
        moved = list(plans)
        moved[i] = ChargingPlan(plans[i].selection, charge, plans[i].sequence, plans[i].route_len)
        sold0 = np.sum([p.charge for p in plans], axis=0)
        sold1 = np.sum([p.charge for p in moved], axis=0)
        flow = np.sum([p.selection for p in plans], axis=0)
        dj = (ev_cost(evs[i], moved[i], sold1, flow, wcls, params, MATRIX)
              - ev_cost(evs[i], plans[i], sold0, flow, wcls, params, MATRIX))
        dphi = (potential_value(evs, moved, wcls, params, MATRIX)
                - potential_value(evs, plans, wcls, params, MATRIX))
        if abs(dj) > 1e-9:
            total += 1
            agree += np.sign(dj) == np.sign(dphi)
    print(f"multi-lane quantity changes: sign agreement {agree}/{total}")
    assert total > 0
