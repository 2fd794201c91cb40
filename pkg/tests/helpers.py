"""Random fleets and unilateral deviations shared by the identity tests."""
import numpy as np

from wclgame.charge_alloc import lane_caps
from wclgame.models import ChargingPlan, CostParams, Ev, ev_cost_terms, potential_terms, soc_trajectory
from wclgame.network import build_distance_matrix, build_grid_network
from wclgame.harness.bench import grid_lanes
from wclgame.tgsp import tgsp

MATRIX = build_distance_matrix(build_grid_network(4, 4, 1.0))

# acceptance lines, printed again in the terminal summary
CRITERIA: list[str] = []


def report(name: str, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {name}: {detail}"
    CRITERIA.append(line)
    print(line)
    return line


def feasibility_violation(charges, sel, seqs, evs, wcls, flows, params, matrix) -> float:
    """Largest breach of the charge caps and SOC bounds (0 when feasible)."""
    caps = lane_caps(wcls, flows)
    worst = max(0.0, -charges.min(), np.abs(charges[sel == 0]).max(initial=0.0),
                (charges - caps[None, :]).max())
    for i, ev in enumerate(evs):
        seq = list(seqs[i])
        traj = soc_trajectory(ev, [wcls[j] for j in seq], charges[i, seq], matrix, params.energy_per_km)
        worst = max(worst, (ev.soc_min - traj[1:]).max())
        for k, j in enumerate(seq):
            worst = max(worst, charges[i, j] - (ev.soc_max - traj[k + 1]))
    return float(worst)


def make_plan(rng, ev, row, wcls, scale=1.0):
    row = np.asarray(row, dtype=np.int8)
    chosen = [wcls[j] for j in np.flatnonzero(row)]
    seq = tgsp(MATRIX, ev.start, ev.dest, chosen)
    charge = np.where(row == 1, scale * rng.uniform(0, 0.6, row.size), 0.0)
    return ChargingPlan(row, charge, seq.lanes, seq.total_len)


def random_fleet(rng, max_evs=6, max_lanes=4):
    n_lane = int(rng.integers(1, max_lanes + 1))
    wcls = grid_lanes(rng, 4, 4, n_lane, predicted_sales=float(rng.uniform(0, 2)),
                      price_coeff=float(rng.uniform(0, 0.5)), base_price=float(rng.uniform(0.1, 1.0)))
    params = CostParams(congestion_coeff=float(rng.uniform(0.001, 0.2)))
    evs = []
    for i in range(int(rng.integers(1, max_evs + 1))):
        s, d = (int(v) for v in rng.choice(16, size=2, replace=False))
        evs.append(Ev(i, s, d, float(rng.uniform(1, 5)), float(rng.uniform(0.1, 2))))
    plans = [make_plan(rng, ev, rng.integers(0, 2, n_lane), wcls) for ev in evs]
    return evs, wcls, params, plans


def totals(plans, n_lane):
    return (np.sum([p.charge for p in plans], axis=0), np.sum([p.selection for p in plans], axis=0))


def cost_and_potential(evs, wcls, params, plans, i):
    sold, flow = totals(plans, len(wcls))
    j = ev_cost_terms(evs[i], plans[i], sold, flow, wcls, params, MATRIX)
    phi = potential_terms(evs, plans, wcls, params, MATRIX)
    return np.array(j), np.array(phi)


def unilateral(rng, evs, wcls, params, plans, kind):
    """One EV changes its selection ("selection") or its charges ("self"); returns (dJ, dPhi)."""
    i = int(rng.integers(0, len(evs)))
    if kind == "selection":
        row = plans[i].selection.copy()
        while np.array_equal(row, plans[i].selection):
            row = rng.integers(0, 2, len(wcls)).astype(np.int8)
        new = make_plan(rng, evs[i], row, wcls)
    else:
        new = make_plan(rng, evs[i], plans[i].selection, wcls)
    j0, p0 = cost_and_potential(evs, wcls, params, plans, i)
    moved = list(plans)
    moved[i] = new
    j1, p1 = cost_and_potential(evs, wcls, params, moved, i)
    return j1 - j0, p1 - p0


def lane_charge_deviation(rng, evs, wcls, params, plans):
    """One EV moves its charge on one selected lane; returns (dJ1, dPhi1) or None."""
    picks = [(i, j) for i, p in enumerate(plans) for j in np.flatnonzero(p.selection)]
    if not picks:
        return None
    i, j = picks[int(rng.integers(0, len(picks)))]
    charge = plans[i].charge.copy()
    charge[j] = rng.uniform(0, 0.6)
    moved = list(plans)
    moved[i] = ChargingPlan(plans[i].selection, charge, plans[i].sequence, plans[i].route_len)
    j0, p0 = cost_and_potential(evs, wcls, params, plans, i)
    j1, p1 = cost_and_potential(evs, wcls, params, moved, i)
    return j1[0] - j0[0], p1[0] - p0[0]
