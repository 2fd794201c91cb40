"""Acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (repeated in the terminal summary)
before asserting, so a failing sub-check never hides the others' numbers.
"""
import csv
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from helpers import feasibility_violation, lane_charge_deviation, random_fleet, report, unilateral
from wclgame.charge_alloc import INFEASIBLE_OBJECTIVE, brute_force_p1, solve_p1
from wclgame.harness import bucket_means, count_inversions, generate_paper_scenario
from wclgame.harness.bench import grid_bound, pso_bench, random_alloc_instance, random_pso_instance, tgsp_bench
from wclgame.models import Wcl, linearize_max_charge
from wclgame.pso import LowerGame, SwarmConfig, enumerate_selections, iterations_to_within, run_lower_game
from wclgame.stackelberg import iterate_prices, leader_optimum

TOL = 1e-9
CSV_FILES = ("ev_summary.csv", "lane_summary.csv", "stackelberg_history.csv", "pso_trace.csv")


def test_criterion_1_potential_identities():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst_sel = worst_self = 0.0
    for _ in range(1000):
        evs, wcls, params, plans = random_fleet(rng)
        dj, dphi = unilateral(rng, evs, wcls, params, plans, "selection")
        worst_sel = max(worst_sel, abs(dj[1] - dphi[1]), abs(dj[2] - dphi[2]))
        evs, wcls, params, plans = random_fleet(rng)
        dj, dphi = unilateral(rng, evs, wcls, params, plans, "self")
        worst_self = max(worst_self, abs(dj[2] - dphi[2]))
    secs = time.perf_counter() - t0
    ok = worst_sel <= TOL and worst_self <= TOL and secs < 10
    report("1", ok, f"1000 selection changes max |dJ2-dPhi2|,|dJ3-dPhi3| = {worst_sel:.2e}; "
                    f"1000 self-term changes max |dJ3-dPhi3| = {worst_self:.2e}; {secs:.1f} s")
    assert ok


def test_criterion_2_lane_deviation_signs():
    rng = np.random.default_rng(102)
    t0 = time.perf_counter()
    agree = total = 0
    while total < 1000:
        evs, wcls, params, plans = random_fleet(rng)
        out = lane_charge_deviation(rng, evs, wcls, params, plans)
        if out is None:
            continue
        dj, dphi = out
        total += 1
        agree += np.sign(dj) == np.sign(dphi) or (abs(dj) <= TOL and abs(dphi) <= TOL)
    secs = time.perf_counter() - t0
    ok = agree == total and secs < 10
    report("2", ok, f"sign agreement {agree}/{total} single-lane charge deviations; {secs:.1f} s")
    assert ok


def hourly_charge(p, L, f, v, n, tr, vmin, gap):
    s = L * f / v
    xi = 2 * gap / vmin - 1 / f
    return p * L * f / v + p * n * s * (tr + (1 + s) / 2 * xi)


def test_criterion_3_linearization():
    rng = np.random.default_rng(103)
    t0 = time.perf_counter()
    f = np.arange(1, 201, dtype=float)
    worst = 0.0
    for _ in range(100):
        w = Wcl(0, 0, 1, power=float(rng.uniform(10, 500)), lane_len=float(rng.uniform(0.01, 0.2)),
                avg_speed=float(rng.uniform(10, 60)), light_cycles=float(rng.uniform(0, 60)),
                red_duration=float(rng.uniform(0, 0.03)), min_leave_speed=float(rng.uniform(2, 15)),
                stop_gap=float(rng.uniform(0.002, 0.01)))
        a, d, c = linearize_max_charge(w)
        ref = hourly_charge(w.power, w.lane_len, f, w.avg_speed, w.light_cycles, w.red_duration,
                            w.min_leave_speed, w.stop_gap)
        worst = max(worst, float(np.abs(a * f**2 + d * f + c - ref).max()))
    secs = time.perf_counter() - t0
    ok = worst <= TOL and secs < 5
    report("3", ok, f"100 lanes x f=1..200 max |a f^2 + d f + c - U_avr| = {worst:.2e} kWh; {secs:.2f} s")
    assert ok


def test_criterion_4_allocation_vs_oracle():
    rng = np.random.default_rng(104)
    t0 = time.perf_counter()
    excess, slack, infeasible, redrawn = [], [], 0.0, 0
    while len(excess) < 50:
        sel, seqs, evs, wcls, flows, params, matrix = random_alloc_instance(rng)
        slow = brute_force_p1(sel, seqs, evs, wcls, flows, params, matrix, grid_step=0.05)
        if slow.objective == INFEASIBLE_OBJECTIVE:
            # feasible set too thin to contain a lattice point: the oracle has no answer
            redrawn += 1
            continue
        fast = solve_p1(sel, seqs, evs, wcls, flows, params, matrix)
        excess.append(fast.objective - slow.objective - 0.01 * abs(slow.objective))
        slack.append((slow.objective - fast.objective) - grid_bound(evs, wcls, flows, 0.05))
        infeasible = max(infeasible, feasibility_violation(fast.charges, sel, seqs, evs, wcls, flows,
                                                           params, matrix))
    secs = time.perf_counter() - t0
    ok = max(excess) <= TOL and max(slack) <= TOL and infeasible <= TOL and secs < 120
    report("4", ok, f"50 instances: solver never above oracle by >1% (worst {max(excess):+.2e}), "
                    f"oracle never above solver by > grid bound (worst {max(slack):+.2e}), "
                    f"max constraint breach {infeasible:.1e}; "
                    f"{redrawn} lattice-infeasible draws replaced; {secs:.1f} s")
    assert ok


def test_criterion_5_leader_optimum():
    rng = np.random.default_rng(105)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        q = float(rng.uniform(0, 0.2))
        mu = q + float(rng.uniform(0.05, 1.0))
        w = Wcl(0, 0, 1, base_price=float(rng.uniform(0, 1)), predicted_sales=float(rng.uniform(0, 200)))
        grid = np.arange(0.0, 4 * w.predicted_sales + 100 + 0.01, 0.01)
        util = (np.maximum(0.0, w.base_price + q * (grid - w.predicted_sales)) * grid
                - mu * (grid - w.predicted_sales) ** 2)
        worst = max(worst, abs(leader_optimum(w, q, mu) - grid[np.argmax(util)]))
    anchor = leader_optimum(Wcl(0, 0, 1, base_price=0.5, predicted_sales=100.0), 0.01, 0.02)
    secs = time.perf_counter() - t0
    ok = worst <= 0.01 + TOL and abs(anchor - 175) <= 0.01 and secs < 10
    report("5", ok, f"100 random cases max |closed form - grid| = {worst:.4f} kWh; "
                    f"(mu=0.02, q=0.01, U~=100, p0=0.5) -> {anchor:.4f}; {secs:.1f} s")
    assert ok


SWEEP = range(10)


def test_criterion_6_tgsp_quality():
    t0 = time.perf_counter()
    res = tgsp_bench(10, 10, range(2, 7), 200, seed=0)
    speed = tgsp_bench(10, 10, 8, 10, seed=0, repeat=3)
    secs = time.perf_counter() - t0
    ratio = speed["oracle_ms"] / speed["tgsp_ms"]
    never_below = res["min_ratio"] >= 1 - TOL
    within = res["max_ratio"] <= 1.25 + TOL
    over = int(np.sum(np.array(res["ratios"]) > 1.25 + TOL))
    # the same 200-instance draw under other seeds, to show how seed-dependent the bound is
    sweep = [tgsp_bench(10, 10, range(2, 7), 200, seed=s)["max_ratio"] for s in SWEEP]
    held = sum(m <= 1.25 + TOL for m in sweep)
    ok = never_below and res["equal_frac"] >= 0.5 and within and ratio >= 10 and secs < 120
    report("6", ok, f"200 instances n=2..6 (seed 0): TGSP >= oracle {'always' if never_below else 'NOT always'}, "
                    f"equal in {100 * res['equal_frac']:.1f}% (target 70%, gate 50%), "
                    f"worst ratio {res['max_ratio']:.3f} ({over} above 1.25); "
                    f"1.25 bound holds for {held}/{len(sweep)} seeds (worst {max(sweep):.3f}); "
                    f"n=8 median {speed['tgsp_ms']:.2f} ms vs oracle {speed['oracle_ms']:.1f} ms "
                    f"({ratio:.0f}x); {secs:.1f} s")
    assert never_below and res["equal_frac"] >= 0.5 and ratio >= 10 and secs < 120
    assert within, f"{over} of 200 instances exceed 1.25x the exhaustive optimum"


def pso_instance_stats(inst):
    evs, wcls, params, matrix = random_pso_instance(inst)
    game = LowerGame(evs, wcls, params, matrix)
    _, best, values = enumerate_selections(game)
    assert values.size == 4096
    hits = 0
    for seed in range(20):
        out = run_lower_game(evs, wcls, params, matrix, SwarmConfig(seed=seed), game=game)
        hits += out.fitness <= best + 0.05 * abs(best)
    iters = {"improved": [], "traditional": []}
    for seed in range(5):
        for variant in iters:
            out = run_lower_game(evs, wcls, params, matrix, SwarmConfig(seed=seed, variant=variant), game=game)
            iters[variant].append(iterations_to_within(out.fitness_trace))
    return best, hits, np.median(iters["improved"]), np.median(iters["traditional"])


def test_criterion_7_pso_vs_exhaustive():
    t0 = time.perf_counter()
    best, hits, med_i, med_t = pso_instance_stats(0)
    # other random instances, to show how instance-dependent both parts are
    sweep = [pso_instance_stats(inst) for inst in SWEEP]
    a_held = sum(h >= 16 for _, h, _, _ in sweep)
    b_wins = sum(i < t for _, _, i, t in sweep)
    b_ties = sum(i == t for _, _, i, t in sweep)
    # supplementary: the same comparison on the busiest generated cohort
    big = pso_bench(generate_paper_scenario(0), seeds=5)
    secs = time.perf_counter() - t0
    ok_a, ok_b = hits >= 16, med_i < med_t
    report("7", ok_a and ok_b and secs < 600,
           f"(a) instance 0: within 5% of exhaustive optimum {best:.4f} in {hits}/20 runs, "
           f">= 16/20 on {a_held}/{len(sweep)} instances; "
           f"(b) instance 0: median iterations to 1% of final improved {med_i:g} vs traditional {med_t:g} "
           f"(must be strictly less), improved faster on {b_wins}/{len(sweep)} instances, tied on {b_ties}; "
           f"60-EV cohort: improved {big['improved']['median_iters']:g} it to final "
           f"{big['improved']['median_final']:.2f}, traditional {big['traditional']['median_iters']:g} it "
           f"to final {big['traditional']['median_final']:.2f}; {secs:.1f} s")
    assert ok_a and secs < 600
    assert ok_b, "improved variant does not reach its final value in fewer median iterations"


def affine_fixed_point(target, p0, mu):
    a = 100.0 - target
    roots = np.roots([1000.0, -(1000.0 * mu + 2 * a + target), 2 * a * mu - p0]).real
    return roots[(roots >= 0) & (roots < mu)].min()


def test_criterion_8a_affine_stub():
    w = [Wcl(0, 0, 1, base_price=0.5, predicted_sales=50.0)]
    q_star = affine_fixed_point(50.0, 0.5, 1.0)
    out = iterate_prices(w, 0.01, lambda lanes, k: np.array([100 - 500 * lanes[0].price_coeff]), 1.0,
                         sigma=1.0, phi=500.0, max_iters=50)
    q = out.leader.price_coeffs[0]
    gap = abs((100 - 500 * q) - leader_optimum(w[0], q, 1.0))
    ok = out.converged and out.iterations <= 50 and gap <= 1.0 and abs(q - q_star) * 500 <= 1.0
    report("8a", ok, f"stub converged in {out.iterations} iterations to q={q:.5f} "
                     f"(fixed point {q_star:.5f}), final gap {gap:.3f} kWh")
    assert ok


@pytest.fixture(scope="module")
def paper_runs(tmp_path_factory):
    """Two CLI runs of the generated scenario with seed 7."""
    runs = []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp(name)
        t0 = time.perf_counter()
        proc = subprocess.run([sys.executable, "-m", "wclgame", "run", "--scenario", "paper",
                               "--seed", "7", "--out", str(out)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        runs.append((out, time.perf_counter() - t0))
    return runs


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_criterion_8b_paper_convergence(paper_runs):
    out, secs = paper_runs[0]
    meta = json.loads((out / "run_meta.json").read_text())
    history = read_csv(out / "stackelberg_history.csv")
    lines, converged = [], 0
    for h in meta["hours"]:
        rows = [r for r in history if int(r["hour"]) == h["hour"]]
        first = max(float(r["gap"]) for r in rows if int(r["k"]) == 0)
        last_k = max(int(r["k"]) for r in rows)
        last = max(float(r["gap"]) for r in rows if int(r["k"]) == last_k)
        reached = last <= 1.0 and h["converged"] and h["iterations"] <= 50
        converged += reached
        lines.append(f"h{h['hour']}: {h['iterations']} it, gap {first:.2f}->{last:.2f}")
    ok = converged >= 4 and secs < 1800
    report("8b", ok, f"{converged}/5 hours within 1 kWh before the cap ({'; '.join(lines)}); {secs:.1f} s")
    assert ok


def test_criterion_9_fleet_trends(paper_runs):
    out, _ = paper_runs[0]
    rows = read_csv(out / "ev_summary.csv")
    for r in rows:
        for key in ("soc_init", "charged_kwh", "electricity_cost", "residual_soc"):
            r[key] = float(r[key])
    charge = bucket_means(rows, "charged_kwh")
    cost = bucket_means(rows, "electricity_cost")
    low = min(r["residual_soc"] for r in rows)
    inv_charge, inv_cost = count_inversions(charge), count_inversions(cost)
    ok = inv_charge <= 1 and inv_cost <= 1 and low >= 0.5
    report("9", ok, f"bucket charge {np.round(charge, 3).tolist()} ({inv_charge} inversions); "
                    f"bucket cost {np.round(cost, 3).tolist()} ({inv_cost} inversions); "
                    f"min residual SOC {low:.3f} kWh over {len(rows)} EVs")
    assert ok


def test_criterion_10_determinism(paper_runs):
    (a, t_a), (b, t_b) = paper_runs
    same = [name for name in CSV_FILES if (a / name).read_bytes() == (b / name).read_bytes()]
    meta_same = (a / "run_meta.json").read_bytes() == (b / "run_meta.json").read_bytes()
    ok = len(same) == len(CSV_FILES) and meta_same and t_b < 2 * t_a + 5
    report("10", ok, f"{len(same)}/{len(CSV_FILES)} CSVs and run_meta.json "
                     f"{'identical' if meta_same else 'DIFFERENT'} across two seed-7 runs "
                     f"({t_a:.1f} s, {t_b:.1f} s)")
    assert ok
