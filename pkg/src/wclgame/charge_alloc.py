"""Charge quantities for fixed lane selections.

The fleet problem minimises lane revenue minus the vehicles' charging value,
subject to per-lane caps and each vehicle's SOC chain along its route. Lanes
couple vehicles only through their totals, so the problem is solved exactly
per lane with the SOC chain relaxed; when the relaxed optimum breaks a chain
the full program goes to an interior-point QP.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers

from .errors import InfeasibleError, ValidationError
from .models import CostParams, Ev, Wcl, per_ev_max_charge, price, route_legs
from .network import DistanceMatrix

INFEASIBLE_OBJECTIVE = 1e12
FEAS_TOL = 1e-9
MAX_GRID_POINTS = 10**7

solvers.options.update(show_progress=False, abstol=1e-10, reltol=1e-9, feastol=1e-10, maxiters=200)


@dataclass(frozen=True, eq=False)
class AllocationResult:
    charges: np.ndarray
    objective: float
    feasible: bool
    infeasible_evs: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class SocChain:
    """Bounds on one EV's cumulative charge after each lane of its sequence.

    ``lower[k]`` / ``upper[k]`` bound the cumulative charge after ``k`` lanes
    (``k = 0`` is before the first lane); ``reach_lo`` / ``reach_hi`` are
    those bounds tightened backwards so that any value inside can still be
    completed feasibly.
    """

    lanes: tuple[int, ...]
    caps: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    reach_lo: np.ndarray
    reach_hi: np.ndarray

    @property
    def feasible(self) -> bool:
        return bool(_feasible(self.reach_lo[None], self.reach_hi[None])[0])


def _feasible(lo, hi):
    return np.all(lo <= hi + FEAS_TOL, axis=1) & (lo[:, 0] <= FEAS_TOL) & (hi[:, 0] >= -FEAS_TOL)


def _tighten(lower, upper, caps):
    lo, hi = lower.copy(), upper.copy()
    for k in range(caps.shape[1] - 1, -1, -1):
        np.maximum(lo[:, k], lo[:, k + 1] - caps[:, k], out=lo[:, k])
        np.minimum(hi[:, k], hi[:, k + 1], out=hi[:, k])
    return lo, hi


def _bounds(ev: Ev, lanes, wcls, matrix, energy_per_km):
    used = energy_per_km * np.cumsum(route_legs(matrix, ev.start, ev.dest, [wcls[j] for j in lanes]))
    lower = ev.soc_min - ev.soc_init + used
    upper = np.concatenate(([0.0], ev.soc_max - ev.soc_init + used[:-1]))
    return lower, upper


def soc_chain(ev: Ev, lanes: Sequence[int], wcls: Sequence[Wcl], caps: Sequence[float],
              matrix: DistanceMatrix, energy_per_km: float) -> SocChain:
    lanes = tuple(lanes)
    lower, upper = _bounds(ev, lanes, wcls, matrix, energy_per_km)
    cap = np.array([caps[j] for j in lanes], dtype=np.float64)
    lo, hi = _tighten(lower[None], upper[None], cap[None])
    return SocChain(lanes, cap, lower, upper, lo[0], hi[0])


@dataclass(frozen=True, eq=False)
class FleetChains:
    """All EVs' chains padded to a common length with zero-cap dummy lanes."""

    lanes: np.ndarray
    caps: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    reach_lo: np.ndarray
    reach_hi: np.ndarray
    sequences: tuple[tuple[int, ...], ...]

    @property
    def feasible(self) -> np.ndarray:
        return _feasible(self.reach_lo, self.reach_hi)

    def row(self, i: int) -> SocChain:
        n = len(self.sequences[i])
        return SocChain(self.sequences[i], self.caps[i, :n], self.lower[i, :n + 1],
                        self.upper[i, :n + 1], self.reach_lo[i, :n + 1], self.reach_hi[i, :n + 1])

    def gather(self, charges: np.ndarray) -> np.ndarray:
        """Charges in route order, zero on padding."""
        rows = np.arange(charges.shape[0])[:, None]
        return np.where(self.lanes >= 0, charges[rows, np.maximum(self.lanes, 0)], 0.0)

    def scatter(self, ordered: np.ndarray, n_lanes: int) -> np.ndarray:
        out = np.zeros((ordered.shape[0], n_lanes))
        rows, ks = np.nonzero(self.lanes >= 0)
        out[rows, self.lanes[rows, ks]] = ordered[rows, ks]
        return out

    def project(self, ordered: np.ndarray) -> np.ndarray:
        """Vectorised ``project_feasible`` over every EV (rows must be feasible)."""
        out = ordered.copy()
        total = np.zeros(out.shape[0])
        for k in range(out.shape[1]):
            lo = np.maximum(0.0, self.reach_lo[:, k + 1] - total)
            hi = np.maximum(np.minimum(self.caps[:, k], self.reach_hi[:, k + 1] - total), lo)
            out[:, k] = np.minimum(np.maximum(out[:, k], lo), hi)
            total += out[:, k]
        return out

    def violation(self, ordered: np.ndarray) -> np.ndarray:
        cum = np.concatenate((np.zeros((ordered.shape[0], 1)), np.cumsum(ordered, axis=1)), axis=1)
        return np.maximum.reduce([np.zeros(ordered.shape[0]),
                                  np.max(self.lower - cum, axis=1), np.max(cum - self.upper, axis=1),
                                  np.max(-ordered, axis=1, initial=0.0),
                                  np.max(ordered - self.caps, axis=1, initial=0.0)])


def fleet_chains(evs, sequences, wcls, caps, matrix, energy_per_km, cache=None) -> FleetChains:
    n_ev = len(evs)
    width = max((len(s) for s in sequences), default=0)
    lanes = np.full((n_ev, width), -1, dtype=np.int64)
    cap = np.zeros((n_ev, width))
    lower = np.zeros((n_ev, width + 1))
    upper = np.zeros((n_ev, width + 1))
    caps = np.asarray(caps, dtype=np.float64)
    for i, (ev, seq) in enumerate(zip(evs, sequences)):
        key = (i, tuple(seq))
        hit = cache.get(key) if cache is not None else None
        if hit is None:
            hit = _bounds(ev, seq, wcls, matrix, energy_per_km)
            if cache is not None:
                cache[key] = hit
        lo, up = hit
        n = len(seq)
        lanes[i, :n] = seq
        cap[i, :n] = caps[list(seq)]
        lower[i, :n + 1] = lo
        lower[i, n + 1:] = lo[-1]
        upper[i, :n + 1] = up
        upper[i, n + 1:] = np.inf
    reach_lo, reach_hi = _tighten(lower, upper, cap)
    return FleetChains(lanes, cap, lower, upper, reach_lo, reach_hi, tuple(tuple(s) for s in sequences))


def project_feasible(chain: SocChain, charges: Sequence[float]) -> np.ndarray:
    """Clip each charge, in route order, into the range that keeps the rest feasible.

    Feasible inputs are returned unchanged. Raises ``InfeasibleError`` when no
    charging pattern can keep the SOC within bounds.
    """
    if not chain.feasible:
        raise InfeasibleError("SOC bounds cannot be met on this route even at maximum charge")
    out = np.array(charges, dtype=np.float64)
    total = 0.0
    for k in range(len(chain.lanes)):
        lo = max(0.0, chain.reach_lo[k + 1] - total)
        hi = max(min(chain.caps[k], chain.reach_hi[k + 1] - total), lo)
        out[k] = min(max(out[k], lo), hi)
        total += out[k]
    return out


def chain_violation(chain: SocChain, charges: Sequence[float]) -> float:
    u = np.asarray(charges, dtype=np.float64)
    cum = np.concatenate(([0.0], np.cumsum(u)))
    return float(max(0.0, np.max(chain.lower - cum), np.max(cum - chain.upper),
                     np.max(-u, initial=0.0), np.max(u - chain.caps, initial=0.0)))


def p1_objective(charges: np.ndarray, evs: Sequence[Ev], wcls: Sequence[Wcl]) -> float:
    sold = charges.sum(axis=0)
    revenue = sum(price(w, sold[j]) * sold[j] for j, w in enumerate(wcls))
    values = np.array([ev.value_coeff for ev in evs])
    return float(revenue - values @ charges.sum(axis=1))


def _lane_revenue(w: Wcl, total: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, w.base_price + w.price_coeff * (total - w.predicted_sales)) * total


def _solve_lane(w: Wcl, values: np.ndarray, cap: float) -> np.ndarray:
    """Exact optimum for one lane with only the per-vehicle caps.

    Revenue minus the best achievable value is piecewise quadratic in the
    lane total; its minimum sits at a knot, the price kink or a stationary
    point of some piece.
    """
    if values.size == 0 or cap <= 0:
        return np.zeros(values.size)
    order = np.argsort(-values, kind="stable")
    slopes = values[order]
    knots = cap * np.arange(values.size + 1)
    gained = np.concatenate(([0.0], np.cumsum(slopes * cap)))
    cand = [knots]
    q, beta = w.price_coeff, w.base_price - w.price_coeff * w.predicted_sales
    if q != 0:
        cand.append(np.array([-beta / q]))
    if q > 0:
        cand.append((slopes - beta) / (2 * q))
    pts = np.clip(np.concatenate(cand), 0.0, knots[-1])
    piece = np.minimum(np.floor(pts / cap).astype(int), values.size - 1)
    value_at = gained[piece] + slopes[piece] * (pts - knots[piece])
    h = _lane_revenue(w, pts) - value_at
    best = np.flatnonzero(h <= h.min() + 1e-12)
    total = pts[best[np.argmin(pts[best])]]
    alloc = np.zeros(values.size)
    full = int(np.floor(total / cap + 1e-12))
    alloc[order[:full]] = cap
    if full < values.size:
        alloc[order[full]] = max(0.0, total - full * cap)
    return alloc


def _relaxed(selections, evs, wcls, caps) -> np.ndarray:
    values = np.array([ev.value_coeff for ev in evs])
    out = np.zeros(selections.shape)
    for j, w in enumerate(wcls):
        rows = np.flatnonzero(selections[:, j])
        out[rows, j] = _solve_lane(w, values[rows], caps[j])
    return out


def _qp(selections, chains: FleetChains, evs, wcls, anchor: np.ndarray) -> np.ndarray:
    """Full program as a QP; lanes with a negative slope are priced at ``anchor``."""
    pairs = [(i, j) for i, seq in enumerate(chains.sequences) for j in seq]
    index = {p: k for k, p in enumerate(pairs)}
    m = len(pairs)
    c = np.array([-evs[i].value_coeff for i, _ in pairs], dtype=np.float64)
    sold0 = anchor.sum(axis=0)
    lane_vars = {j: [index[(i, j)] for i in np.flatnonzero(selections[:, j])] for j in range(len(wcls))}
    quad, kinks = [], []
    for j, w in enumerate(wcls):
        vs = lane_vars[j]
        if not vs:
            continue
        q, beta = w.price_coeff, w.base_price - w.price_coeff * w.predicted_sales
        if q > 0 and beta < 0:
            # revenue = q*t^2 + q*kink*t with t >= max(0, U - kink)
            kinks.append((j, -beta / q))
        elif q > 0:
            quad.append((vs, q))
            c[vs] += beta
        elif q == 0:
            c[vs] += max(w.base_price, 0.0)
        else:
            c[vs] += price(w, sold0[j])
    nv = m + len(kinks)
    P = np.zeros((nv, nv))
    for vs, q in quad:
        P[np.ix_(vs, vs)] += 2 * q
    c = np.concatenate((c, np.zeros(len(kinks))))
    rows, h = [], []

    def add(idx, coef, rhs):
        r = np.zeros(nv)
        r[idx] = coef
        rows.append(r)
        h.append(rhs)

    for k, (j, kink) in enumerate(kinks):
        wk = m + k
        q = wcls[j].price_coeff
        P[wk, wk] = 2 * q
        c[wk] = q * kink
        add(wk, -1.0, 0.0)
        add(lane_vars[j] + [wk], [1.0] * len(lane_vars[j]) + [-1.0], kink)
    for i, seq in enumerate(chains.sequences):
        vs = [index[(i, j)] for j in seq]
        for k, v in enumerate(vs):
            add(v, -1.0, 0.0)
            add(v, 1.0, chains.caps[i, k])
            add(vs[:k + 1], 1.0, chains.upper[i, k + 1])
            add(vs[:k + 1], -1.0, -chains.lower[i, k + 1])
    P += 1e-12 * np.eye(nv)
    sol = solvers.qp(cvx_matrix(P), cvx_matrix(c), cvx_matrix(np.array(rows)), cvx_matrix(np.array(h)))
    x = np.array(sol["x"]).ravel()
    out = np.zeros(selections.shape)
    for (i, j), k in index.items():
        out[i, j] = x[k]
    return out


def _check_inputs(selections, sequences, evs, wcls, flows):
    sel = np.asarray(selections, dtype=np.int8)
    if sel.shape != (len(evs), len(wcls)):
        raise ValidationError(f"selection matrix shape {sel.shape} != ({len(evs)}, {len(wcls)})")
    if len(sequences) != len(evs) or len(flows) != len(wcls):
        raise ValidationError("sequences/flows do not match the fleet or lane count")
    from_seq = np.zeros(sel.shape, dtype=np.int8)
    for i, seq in enumerate(sequences):
        if len(set(seq)) != len(seq):
            raise ValidationError(f"EV {evs[i].id}: sequence repeats a lane")
        from_seq[i, list(seq)] = 1
    if not np.array_equal(from_seq, sel):
        i = int(np.flatnonzero((from_seq != sel).any(axis=1))[0])
        raise ValidationError(f"EV {evs[i].id}: sequence does not match its selection")
    return sel


def lane_caps(wcls, flows) -> np.ndarray:
    return np.array([per_ev_max_charge(w, flows[j]) for j, w in enumerate(wcls)])


def solve_p1(selections, sequences, evs: Sequence[Ev], wcls: Sequence[Wcl], flows,
             params: CostParams, matrix: DistanceMatrix, cache: dict | None = None) -> AllocationResult:
    """Optimal charges for fixed selections and visiting orders.

    Infeasible routes give ``feasible=False`` and the sentinel objective.
    ``cache`` may hold per-(EV, sequence) SOC bounds across calls with the
    same fleet.
    """
    sel = _check_inputs(selections, sequences, evs, wcls, flows)
    caps = lane_caps(wcls, flows)
    chains = fleet_chains(evs, sequences, wcls, caps, matrix, params.energy_per_km, cache)
    ok = chains.feasible
    if not ok.all():
        return AllocationResult(np.zeros(sel.shape), INFEASIBLE_OBJECTIVE, False,
                                tuple(int(i) for i in np.flatnonzero(~ok)))
    ordered = chains.gather(_relaxed(sel, evs, wcls, caps))
    best = chains.scatter(chains.project(ordered), len(wcls))
    best_obj = p1_objective(best, evs, wcls)
    if np.all(chains.violation(ordered) <= FEAS_TOL):
        return AllocationResult(best, best_obj, True)
    anchor = best
    rounds = 1 if all(w.price_coeff >= 0 for w in wcls) else 10
    for _ in range(rounds):
        cand = chains.scatter(chains.project(chains.gather(_qp(sel, chains, evs, wcls, anchor))), len(wcls))
        obj = p1_objective(cand, evs, wcls)
        if obj < best_obj:
            best, best_obj = cand, obj
        if np.allclose(cand, anchor, atol=1e-9):
            break
        anchor = cand
    return AllocationResult(best, best_obj, True)


def brute_force_p1(selections, sequences, evs: Sequence[Ev], wcls: Sequence[Wcl], flows,
                   params: CostParams, matrix: DistanceMatrix, grid_step: float = 0.05,
                   chunk: int = 1 << 18) -> AllocationResult:
    """Exhaustive minimum over charges on a ``grid_step`` lattice.

    Feasibility is judged on the SOC trajectory directly, independent of the
    chain bounds used by the solver.
    """
    sel = _check_inputs(selections, sequences, evs, wcls, flows)
    caps = lane_caps(wcls, flows)
    pairs = [(i, j) for i, seq in enumerate(sequences) for j in seq]
    levels = [np.arange(int(np.floor(caps[j] / grid_step + 1e-9)) + 1) * grid_step for _, j in pairs]
    sizes = [len(v) for v in levels]
    total = int(np.prod(sizes, dtype=np.int64)) if sizes else 1
    if total > MAX_GRID_POINTS:
        raise ValidationError(f"grid has {total} points, more than {MAX_GRID_POINTS}")
    values = np.array([ev.value_coeff for ev in evs])
    p0 = np.array([w.base_price for w in wcls])
    qs = np.array([w.price_coeff for w in wcls])
    pred = np.array([w.predicted_sales for w in wcls])
    # per-EV SOC bookkeeping along the route
    trips = []
    for i, seq in enumerate(sequences):
        legs = route_legs(matrix, evs[i].start, evs[i].dest, [wcls[j] for j in seq])
        cols = [pairs.index((i, j)) for j in seq]
        trips.append((evs[i], params.energy_per_km * legs, cols))
    best_obj, best_x = np.inf, None
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        x = np.empty((flat.size, len(pairs)))
        rem = flat
        for k in range(len(pairs) - 1, -1, -1):
            rem, digit = np.divmod(rem, sizes[k])
            x[:, k] = levels[k][digit]
        ok = np.ones(flat.size, dtype=bool)
        for ev, used, cols in trips:
            soc = np.full(flat.size, ev.soc_init)
            for k, col in enumerate(cols):
                soc = soc - used[k]
                ok &= soc >= ev.soc_min - FEAS_TOL
                ok &= x[:, col] <= ev.soc_max - soc + FEAS_TOL
                soc = soc + x[:, col]
            soc = soc - used[-1]
            ok &= soc >= ev.soc_min - FEAS_TOL
        if not ok.any():
            continue
        x = x[ok]
        sold = np.zeros((x.shape[0], len(wcls)))
        gain = np.zeros(x.shape[0])
        for k, (i, j) in enumerate(pairs):
            sold[:, j] += x[:, k]
            gain += values[i] * x[:, k]
        obj = (np.maximum(0.0, p0 + qs * (sold - pred)) * sold).sum(axis=1) - gain
        k = int(np.argmin(obj))
        if obj[k] < best_obj:
            best_obj, best_x = float(obj[k]), x[k]
    charges = np.zeros(sel.shape)
    if best_x is None:
        return AllocationResult(charges, INFEASIBLE_OBJECTIVE, False,
                                tuple(range(len(evs))))
    for k, (i, j) in enumerate(pairs):
        charges[i, j] = best_x[k]
    return AllocationResult(charges, best_obj, True)
