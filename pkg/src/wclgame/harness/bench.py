"""Random instances and benchmark loops behind the CLI bench commands.

Each bench returns a plain dict of summary numbers so callers can print it,
dump it as JSON or assert on it.
"""
from __future__ import annotations

import csv
import time
from dataclasses import replace

import numpy as np

from ..charge_alloc import brute_force_p1, lane_caps, solve_p1
from ..errors import ValidationError
from ..models import CostParams, Ev, Wcl
from ..network import build_distance_matrix, build_grid_network, grid_node
from ..pso import VARIANTS, LowerGame, iterations_to_within, run_lower_game
from ..tgsp import tgsp, traversal_oracle
from .scenario import Scenario


def grid_lanes(rng: np.random.Generator, rows: int, cols: int, n: int, **lane_kw) -> list[Wcl]:
    """``n`` lanes on distinct random lattice roads, each in a random direction."""
    roads = [(grid_node(r, c, cols), grid_node(r, c + 1, cols)) for r in range(rows) for c in range(cols - 1)]
    roads += [(grid_node(r, c, cols), grid_node(r + 1, c, cols)) for r in range(rows - 1) for c in range(cols)]
    if n > len(roads):
        raise ValidationError(f"{n} lanes do not fit on a {rows}x{cols} grid")
    picks = rng.choice(len(roads), size=n, replace=False)
    lanes = []
    for j, k in enumerate(picks):
        a, b = roads[int(k)]
        if rng.random() < 0.5:
            a, b = b, a
        lanes.append(Wcl(j, a, b, **lane_kw))
    return lanes


def _timed(fn, repeat: int):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def tgsp_bench(rows: int, cols: int, lanes, trials: int, seed: int = 0, repeat: int = 1) -> dict:
    """TGSP against the exhaustive ordering on random lane sets of a lattice.

    ``lanes`` is a lane count or a sequence of counts drawn uniformly per
    trial. Times are the best of ``repeat`` calls, in milliseconds.
    """
    counts = [lanes] if np.isscalar(lanes) else list(lanes)
    matrix = build_distance_matrix(build_grid_network(rows, cols, 1.0))
    rng = np.random.default_rng(seed)
    ratios, t_greedy, t_oracle, ns = [], [], [], []
    for _ in range(trials):
        n = int(rng.choice(counts))
        wcls = grid_lanes(rng, rows, cols, n)
        s, d = (int(v) for v in rng.choice(rows * cols, size=2, replace=False))
        seq, tg = _timed(lambda: tgsp(matrix, s, d, wcls), repeat)
        best, to = _timed(lambda: traversal_oracle(matrix, s, d, wcls), repeat)
        ratios.append(seq.total_len / best.total_len)
        t_greedy.append(tg)
        t_oracle.append(to)
        ns.append(n)
    ratios = np.array(ratios)
    return {
        "trials": trials, "lanes": counts,
        "equal_frac": float(np.mean(np.abs(ratios - 1.0) <= 1e-9)),
        "min_ratio": float(ratios.min()), "max_ratio": float(ratios.max()),
        "mean_ratio": float(ratios.mean()),
        "tgsp_ms": 1e3 * float(np.median(t_greedy)), "oracle_ms": 1e3 * float(np.median(t_oracle)),
        "ratios": ratios.tolist(), "n": ns,
    }


def random_alloc_instance(rng: np.random.Generator, max_evs: int = 3, max_lanes: int = 2):
    """A small feasible charge-allocation problem on a 3x3 lattice of 1 km roads.

    Returns ``(selections, sequences, evs, wcls, flows, params, matrix)``.
    """
    rows = cols = 3
    matrix = build_distance_matrix(build_grid_network(rows, cols, 1.0))
    params = CostParams()
    while True:
        n_lane = int(rng.integers(1, max_lanes + 1))
        n_ev = int(rng.integers(1, max_evs + 1))
        wcls = grid_lanes(rng, rows, cols, n_lane,
                          power=float(rng.uniform(150, 300)), avg_speed=float(rng.uniform(30, 40)),
                          predicted_sales=float(rng.uniform(0, 2)),
                          price_coeff=float(rng.uniform(0, 0.5)))
        evs, sel, seqs = [], np.zeros((n_ev, n_lane), dtype=np.int8), []
        for i in range(n_ev):
            s, d = (int(v) for v in rng.choice(rows * cols, size=2, replace=False))
            evs.append(Ev(i, s, d, float(rng.uniform(0.7, 5.0)), float(rng.uniform(0.1, 2.0))))
            chosen = rng.permutation(n_lane)[: int(rng.integers(1, n_lane + 1))]
            sel[i, chosen] = 1
            seqs.append(tgsp(matrix, s, d, [wcls[j] for j in sorted(chosen)]).lanes)
        flows = np.maximum(sel.sum(axis=0), 1).astype(float)
        if solve_p1(sel, seqs, evs, wcls, flows, params, matrix).feasible:
            return sel, seqs, evs, wcls, flows, params, matrix


def grid_bound(evs, wcls, flows, step: float) -> float:
    """Largest objective change from moving every charge by one grid step."""
    caps = lane_caps(wcls, flows)
    total = caps.sum() * len(evs)
    slope = max(e.value_coeff for e in evs) + max(
        w.base_price + abs(w.price_coeff) * (2 * total + w.predicted_sales) for w in wcls)
    return slope * step * len(evs) * len(wcls)


def alloc_bench(instances: int, seed: int = 0, grid_step: float = 0.05) -> dict:
    """Exact allocator against the lattice brute force on random small problems."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(instances):
        sel, seqs, evs, wcls, flows, params, matrix = random_alloc_instance(rng)
        t0 = time.perf_counter()
        fast = solve_p1(sel, seqs, evs, wcls, flows, params, matrix)
        t1 = time.perf_counter()
        slow = brute_force_p1(sel, seqs, evs, wcls, flows, params, matrix, grid_step=grid_step)
        t2 = time.perf_counter()
        rows.append({"solver": fast.objective, "brute": slow.objective,
                     "bound": grid_bound(evs, wcls, flows, grid_step),
                     "solver_ms": 1e3 * (t1 - t0), "brute_ms": 1e3 * (t2 - t1)})
    gaps = [r["solver"] - r["brute"] for r in rows]
    return {"instances": instances, "max_excess": float(max(gaps, default=0.0)),
            "max_grid_gain": float(-min(gaps, default=0.0)),
            "solver_ms": float(np.median([r["solver_ms"] for r in rows])) if rows else 0.0,
            "brute_ms": float(np.median([r["brute_ms"] for r in rows])) if rows else 0.0,
            "rows": rows}


def random_pso_instance(seed: int, n_evs: int = 4, n_lanes: int = 3):
    """A small lower game on a 4x4 lattice for exhaustive comparison."""
    rng = np.random.default_rng(seed)
    rows = cols = 4
    matrix = build_distance_matrix(build_grid_network(rows, cols, 1.0))
    wcls = grid_lanes(rng, rows, cols, n_lanes, power=300.0, avg_speed=30.0,
                      predicted_flow=float(n_evs) / 2, predicted_sales=0.4)
    evs = []
    for i in range(n_evs):
        s = grid_node(int(rng.integers(0, 2)), int(rng.integers(0, 2)), cols)
        d = grid_node(int(rng.integers(2, 4)), int(rng.integers(2, 4)), cols)
        soc = float(rng.uniform(2.5, 5.0))
        evs.append(Ev(i, s, d, soc, float(1.5 - 0.56 * (soc - 2.5))))
    return evs, wcls, CostParams(), matrix


def pso_bench(scenario: Scenario, variants=VARIANTS, seeds: int = 5, hour: int | None = None) -> dict:
    """Both swarm variants on one cohort at the initial prices, over paired seeds.

    ``hour`` defaults to the busiest cohort. Seeds run from the scenario's
    master seed upward, one per pair.
    """
    if not scenario.cohorts:
        raise ValidationError("scenario has no cohorts")
    for v in variants:
        if v not in VARIANTS:
            raise ValidationError(f"unknown variant {v!r}; choose from {VARIANTS}")
    if hour is None:
        cohort = max(scenario.cohorts, key=lambda c: len(c.evs))
    else:
        matches = [c for c in scenario.cohorts if c.hour == hour]
        if not matches:
            raise ValidationError(f"no cohort for hour {hour}")
        cohort = matches[0]
    matrix = build_distance_matrix(scenario.network)
    lanes = scenario.lanes_for(cohort)
    game = LowerGame(cohort.evs, lanes, scenario.params, matrix, scenario.game.swarm.penalty_weight)
    out = {"hour": cohort.hour, "evs": len(cohort.evs), "seeds": seeds}
    for v in variants:
        finals, iters, traces = [], [], []
        for s in range(seeds):
            cfg = replace(scenario.game.swarm, seed=scenario.game.seed + s, variant=v)
            res = run_lower_game(cohort.evs, lanes, scenario.params, matrix, cfg, game=game)
            finals.append(float(res.fitness))
            iters.append(iterations_to_within(res.fitness_trace))
            traces.append([float(x) for x in res.fitness_trace])
        out[v] = {"final": finals, "iters_to_1pct": iters, "traces": traces,
                  "median_final": float(np.median(finals)), "median_iters": float(np.median(iters))}
    return out


def write_pso_traces(result: dict, path) -> None:
    """Best-fitness traces of a ``pso_bench`` result as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("variant", "seed", "iteration", "best_fitness"))
        for v in VARIANTS:
            for s, trace in enumerate(result.get(v, {}).get("traces", [])):
                writer.writerows((v, s, it, repr(x)) for it, x in enumerate(trace))


__all__ = ["alloc_bench", "grid_bound", "grid_lanes", "pso_bench", "random_alloc_instance",
           "random_pso_instance", "tgsp_bench", "write_pso_traces"]
