"""Hourly double-layer games over a scenario and their CSV exports."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..models import price, soc_trajectory
from ..network import build_distance_matrix
from ..stackelberg import GameOutcome, run_double_layer
from .scenario import SOC_BUCKETS, Scenario, scenario_to_dict

log = logging.getLogger(__name__)

EV_COLUMNS = ("hour", "ev_id", "start", "dest", "soc_init", "value_coeff", "lanes", "charged_kwh",
              "electricity_cost", "residual_soc", "route_len_km", "shortest_len_km", "feasible")
LANE_COLUMNS = ("hour", "lane_id", "q", "flow", "predicted_flow", "sold_kwh", "predicted_sales_kwh",
                "desired_kwh", "price", "gap_kwh")
HISTORY_COLUMNS = ("hour", "k", "lane_id", "q", "U_F", "U_L", "gap")
TRACE_COLUMNS = ("hour", "k", "iteration", "best_fitness", "variant")


@dataclass
class HourResult:
    hour: int
    outcome: GameOutcome
    seconds: float = 0.0


@dataclass
class ResultBundle:
    hours: list[HourResult] = field(default_factory=list)
    ev_rows: list[dict] = field(default_factory=list)
    lane_rows: list[dict] = field(default_factory=list)
    history_rows: list[dict] = field(default_factory=list)
    trace_rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def hour_seed(master: int, hour: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=(0x4F, hour)).generate_state(1)[0])


def run_experiment(scenario: Scenario, progress=None) -> ResultBundle:
    """Independent Stackelberg game per hourly cohort, with fleet summaries."""
    matrix = build_distance_matrix(scenario.network)
    game = scenario.game
    config = scenario_to_dict(scenario)
    config["cohorts"] = [{"hour": c.hour, "evs": len(c.evs)} for c in scenario.cohorts]
    bundle = ResultBundle(meta={"version": __version__, "seed": game.seed, "config": config})
    for cohort in scenario.cohorts:
        lanes = scenario.lanes_for(cohort)
        swarm = replace(game.swarm, seed=hour_seed(game.seed, cohort.hour))
        out = run_double_layer(list(cohort.evs), lanes, scenario.params, matrix, swarm,
                               q_init=game.q_init, max_outer_iters=game.max_outer_iters,
                               sigma=game.sigma, phi=game.phi, warm_start=game.warm_start)
        bundle.hours.append(HourResult(cohort.hour, out))
        log.info("hour %d: %d EVs, %d iterations, converged=%s, final gap=%.4f", cohort.hour,
                 len(cohort.evs), out.iterations, out.converged,
                 out.gaps()[-1] if out.iterations else 0.0)
        if progress:
            progress(cohort.hour, out)
        _summarise(bundle, scenario, cohort, lanes, out, matrix)
    return bundle


def _summarise(bundle, scenario, cohort, lanes, out, matrix):
    final = [replace(w, price_coeff=float(q)) for w, q in zip(lanes, out.leader.price_coeffs)]
    low = out.lower
    prices = [float(price(w, low.sold[j])) for j, w in enumerate(final)]
    for i, ev in enumerate(cohort.evs):
        seq = low.sequences[i]
        u = low.charges[i]
        traj = soc_trajectory(ev, [final[j] for j in seq], [u[j] for j in seq], matrix,
                              scenario.params.energy_per_km)
        bundle.ev_rows.append({
            "hour": cohort.hour, "ev_id": ev.id, "start": ev.start, "dest": ev.dest,
            "soc_init": ev.soc_init, "value_coeff": ev.value_coeff,
            "lanes": " ".join(str(j) for j in seq), "charged_kwh": float(u.sum()),
            "electricity_cost": float(sum(prices[j] * u[j] for j in range(len(final)))),
            "residual_soc": float(traj[-1]), "route_len_km": float(low.route_lens[i]),
            "shortest_len_km": float(matrix.dist[ev.start, ev.dest]), "feasible": int(low.feasible),
        })
    for j, w in enumerate(final):
        bundle.lane_rows.append({
            "hour": cohort.hour, "lane_id": w.id, "q": w.price_coeff, "flow": int(low.flows[j]),
            "predicted_flow": w.predicted_flow, "sold_kwh": float(low.sold[j]),
            "predicted_sales_kwh": w.predicted_sales,
            "desired_kwh": float(out.leader.desired_sales[j]), "price": prices[j],
            "gap_kwh": abs(float(low.sold[j]) - float(out.leader.desired_sales[j])),
        })
    for row in out.history:
        bundle.history_rows.append({"hour": cohort.hour, "k": row.k, "lane_id": row.lane, "q": row.q,
                                    "U_F": row.sold, "U_L": row.desired, "gap": row.gap})
    variant = scenario.game.swarm.variant
    for k, trace in enumerate(out.traces):
        for it, val in enumerate(trace):
            bundle.trace_rows.append({"hour": cohort.hour, "k": k, "iteration": it,
                                      "best_fitness": float(val), "variant": variant})


def bucket_means(rows, key: str, edges=SOC_BUCKETS) -> list[float]:
    """Mean of ``key`` per initial-SOC bucket; the last bucket includes its right edge."""
    soc = np.array([r["soc_init"] for r in rows], dtype=float)
    vals = np.array([r[key] for r in rows], dtype=float)
    idx = np.clip(np.searchsorted(edges, soc, side="right") - 1, 0, len(edges) - 2)
    return [float(vals[idx == b].mean()) if np.any(idx == b) else float("nan")
            for b in range(len(edges) - 1)]


def count_inversions(means) -> int:
    """Adjacent increases in a sequence expected to be non-increasing."""
    m = [x for x in means if not np.isnan(x)]
    return sum(1 for a, b in zip(m, m[1:]) if b > a)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def export_results(bundle: ResultBundle, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, cols, rows in (("ev_summary.csv", EV_COLUMNS, bundle.ev_rows),
                             ("lane_summary.csv", LANE_COLUMNS, bundle.lane_rows),
                             ("stackelberg_history.csv", HISTORY_COLUMNS, bundle.history_rows),
                             ("pso_trace.csv", TRACE_COLUMNS, bundle.trace_rows)):
        _write_csv(out / name, cols, rows)
        files.append(out / name)
    meta = dict(bundle.meta)
    meta["hours"] = [{"hour": h.hour, "iterations": h.outcome.iterations,
                      "converged": h.outcome.converged, "stop_reason": h.outcome.stop_reason,
                      "wcl_utility": h.outcome.wcl_utility} for h in bundle.hours]
    path = out / "run_meta.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    files.append(path)
    return files
