"""Binary particle swarm over the fleet's lane-selection matrix.

A particle's position holds every EV's selection row; its fitness nests the
routing and charge-allocation subproblems.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .charge_alloc import AllocationResult, solve_p1
from .errors import ValidationError
from .models import (ChargingPlan, CostParams, Ev, Wcl, congestion_potential,
                     potential_value, route_extra_costs)
from .network import DistanceMatrix
from .tgsp import ChargingSequence, tgsp

VARIANTS = ("improved", "traditional")


@dataclass(frozen=True)
class SwarmConfig:
    swarm_size: int = 20
    max_iters: int = 60
    late_stage_start: int | None = None
    c1: float = 2.0
    c2: float = 2.0
    inertia_w: float = 0.9
    inertia_end: float = 0.4
    v_max: float = 6.0
    seed: int = 0
    penalty_weight: float | None = None
    variant: str = "improved"

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValidationError("swarm_size must be at least 2")
        if self.max_iters < 2:
            raise ValidationError("max_iters must be at least 2")
        if not 0 < self.late_start < self.max_iters:
            raise ValidationError("late_stage_start must lie strictly inside (0, max_iters)")
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}")

    @property
    def late_start(self) -> int:
        """First late-stage iteration; defaults to 60% of ``max_iters``."""
        if self.late_stage_start is None:
            return max(1, int(0.6 * self.max_iters))
        return self.late_stage_start


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_fitness: float = np.inf


@dataclass(frozen=True, eq=False)
class LowerOutcome:
    selections: np.ndarray
    charges: np.ndarray
    flows: np.ndarray
    sold: np.ndarray
    potential: float
    fitness: float
    feasible: bool
    sequences: tuple[tuple[int, ...], ...]
    route_lens: np.ndarray
    fitness_trace: np.ndarray = field(repr=False)
    seed: int = 0


def penalty(selections: np.ndarray, wcls: Sequence[Wcl], band: float) -> float:
    """Total amount by which lane flows leave the predicted band."""
    flows = np.asarray(selections).sum(axis=0)
    pred = np.array([w.predicted_flow for w in wcls])
    return float(np.sum(np.maximum(0.0, flows - (1 + band) * pred)
                        + np.maximum(0.0, (1 - band) * pred - flows)))


def sigmoid_map(v):
    # equals both printed branches: 1 - 2/(1+e^-v) for v <= 0, 2/(1+e^-v) - 1 above
    return np.abs(np.tanh(0.5 * np.asarray(v, dtype=np.float64)))


def _logistic(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


class LowerGame:
    """Fitness evaluation for one cohort at fixed lane prices.

    Routes are cached per (start, destination, lane set) and fitness values
    per selection matrix, so repeated positions cost a dictionary lookup.
    """

    def __init__(self, evs: Sequence[Ev], wcls: Sequence[Wcl], params: CostParams,
                 matrix: DistanceMatrix, penalty_weight: float | None = None,
                 route_cache: dict | None = None):
        self.evs = list(evs)
        self.wcls = list(wcls)
        self.params = params
        self.matrix = matrix
        self.penalty_weight = params.penalty_weight if penalty_weight is None else penalty_weight
        self._routes: dict[tuple, ChargingSequence] = {} if route_cache is None else route_cache
        self._memo: dict[bytes, tuple[float, AllocationResult]] = {}
        self._bounds: dict = {}
        self.shape = (len(self.evs), len(self.wcls))

    def route(self, i: int, row) -> ChargingSequence:
        ev = self.evs[i]
        chosen = tuple(int(j) for j in np.flatnonzero(row))
        key = (ev.start, ev.dest, chosen)
        if key not in self._routes:
            self._routes[key] = tgsp(self.matrix, ev.start, ev.dest, [self.wcls[j] for j in chosen])
        return self._routes[key]

    def detour_costs(self, routes) -> float:
        total = 0.0
        for ev, r in zip(self.evs, routes):
            c, t = route_extra_costs(self.params, self.params.base_price, r.total_len,
                                     self.matrix.dist[ev.start, ev.dest])
            total += c + t
        return total

    def fitness(self, selections) -> tuple[float, AllocationResult]:
        sel = np.asarray(selections, dtype=np.int8)
        key = sel.tobytes()
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        routes = [self.route(i, row) for i, row in enumerate(sel)]
        flows = sel.sum(axis=0)
        alloc = solve_p1(sel, [r.lanes for r in routes], self.evs, self.wcls, flows,
                         self.params, self.matrix, cache=self._bounds)
        obj2 = self.detour_costs(routes) + sum(congestion_potential(self.params, f) for f in flows)
        value = alloc.objective + obj2 + self.penalty_weight * penalty(sel, self.wcls, self.params.flow_band)
        self._memo[key] = (value, alloc)
        return value, alloc

    def outcome(self, selections, trace=(), seed: int = 0) -> LowerOutcome:
        sel = np.asarray(selections, dtype=np.int8)
        value, alloc = self.fitness(sel)
        routes = [self.route(i, row) for i, row in enumerate(sel)]
        plans = [ChargingPlan(sel[i], alloc.charges[i], r.lanes, r.total_len)
                 for i, r in enumerate(routes)]
        phi = potential_value(self.evs, plans, self.wcls, self.params, self.matrix)
        return LowerOutcome(sel, alloc.charges, sel.sum(axis=0), alloc.charges.sum(axis=0),
                            phi, value, alloc.feasible, tuple(r.lanes for r in routes),
                            np.array([r.total_len for r in routes]), np.asarray(trace, dtype=float),
                            seed)

    def greedy_nearest(self) -> np.ndarray:
        """Each EV takes the single lane that lengthens its route least."""
        sel = np.zeros(self.shape, dtype=np.int8)
        if not self.wcls:
            return sel
        for i in range(len(self.evs)):
            lens = []
            for j in range(len(self.wcls)):
                row = np.zeros(len(self.wcls), dtype=np.int8)
                row[j] = 1
                lens.append(self.route(i, row).total_len)
            sel[i, int(np.argmin(lens))] = 1
        return sel


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def update_late_stage(particle: Particle, global_best: np.ndarray, c1: float, c2: float,
                      rng: np.random.Generator) -> Particle:
    """Velocity from the personal and global bests only; move toward them with prob. s."""
    x = particle.position
    r1, r2 = rng.random(x.shape), rng.random(x.shape)
    v = c1 * r1 * (particle.best_position - x) + c2 * r2 * (global_best - x)
    s = sigmoid_map(v)
    draw = rng.random(x.shape)
    moved = np.where((v < 0) & (draw < s), 0, np.where((v > 0) & (draw < s), 1, x)).astype(np.int8)
    particle.position, particle.velocity = moved, v
    return particle


def update_standard(particle: Particle, global_best: np.ndarray, inertia: float, c1: float,
                    c2: float, v_max: float, rng: np.random.Generator) -> Particle:
    """Canonical binary PSO step: logistic probability of each bit being 1."""
    x = particle.position
    r1, r2 = rng.random(x.shape), rng.random(x.shape)
    v = inertia * particle.velocity + c1 * r1 * (particle.best_position - x) + c2 * r2 * (global_best - x)
    v = np.clip(v, -v_max, v_max)
    particle.position = (rng.random(x.shape) < _logistic(v)).astype(np.int8)
    particle.velocity = v
    return particle


def initial_swarm(game: LowerGame, config: SwarmConfig, anchors=()) -> list[Particle]:
    n_ev, n_lane = game.shape
    rate = np.array([min(1.0, w.predicted_flow / max(n_ev, 1)) for w in game.wcls])
    seeds = [np.zeros(game.shape, dtype=np.int8), game.greedy_nearest(), *anchors]
    swarm = []
    for p in range(config.swarm_size):
        rng = _rng(config.seed, 0, p)
        if p < len(seeds):
            x = np.asarray(seeds[p], dtype=np.int8).copy()
        else:
            x = (rng.random(game.shape) < rate).astype(np.int8)
        v = rng.uniform(-1.0, 1.0, game.shape)
        swarm.append(Particle(x, v, x.copy()))
    return swarm


def run_lower_game(evs: Sequence[Ev], wcls: Sequence[Wcl], params: CostParams,
                   matrix: DistanceMatrix, config: SwarmConfig, anchors=(),
                   game: LowerGame | None = None) -> LowerOutcome:
    """Search lane selections minimising the penalised potential.

    ``anchors`` are extra selection matrices placed in the initial swarm.
    """
    game = game or LowerGame(evs, wcls, params, matrix, config.penalty_weight)
    swarm = initial_swarm(game, config, anchors)
    for p in swarm:
        p.best_fitness, _ = game.fitness(p.position)
    g = min(range(len(swarm)), key=lambda k: swarm[k].best_fitness)
    g_pos, g_fit = swarm[g].best_position.copy(), swarm[g].best_fitness
    trace = [g_fit]
    span = max(config.late_start - 1, 1)
    for it in range(1, config.max_iters + 1):
        late = config.variant == "improved" and it >= config.late_start
        inertia = config.inertia_w + (config.inertia_end - config.inertia_w) * min(it - 1, span) / span
        for k, p in enumerate(swarm):
            rng = _rng(config.seed, it, k)
            if late:
                update_late_stage(p, g_pos, config.c1, config.c2, rng)
            else:
                update_standard(p, g_pos, inertia, config.c1, config.c2, config.v_max, rng)
            fit, _ = game.fitness(p.position)
            if fit < p.best_fitness:
                p.best_fitness, p.best_position = fit, p.position.copy()
        k = min(range(len(swarm)), key=lambda k: swarm[k].best_fitness)
        if swarm[k].best_fitness < g_fit:
            g_pos, g_fit = swarm[k].best_position.copy(), swarm[k].best_fitness
        trace.append(g_fit)
    return game.outcome(g_pos, trace, config.seed)


def iterations_to_within(trace: Sequence[float], rel: float = 0.01) -> int:
    """First iteration whose best fitness is within ``rel`` of the final value."""
    trace = np.asarray(trace, dtype=float)
    final = trace[-1]
    return int(np.argmax(trace <= final + rel * abs(final)))


def enumerate_selections(game: LowerGame, max_bits: int = 20):
    """Full fitness of every selection matrix; returns (best matrix, best value, all values)."""
    n_ev, n_lane = game.shape
    bits = n_ev * n_lane
    if bits > max_bits:
        raise ValidationError(f"{bits} selection bits exceed the enumeration limit {max_bits}")
    values = np.empty(1 << bits)
    best, best_val = None, np.inf
    for code, combo in enumerate(itertools.product((0, 1), repeat=bits)):
        sel = np.array(combo, dtype=np.int8).reshape(game.shape)
        values[code], _ = game.fitness(sel)
        if values[code] < best_val:
            best, best_val = sel, values[code]
    return best, best_val, values
