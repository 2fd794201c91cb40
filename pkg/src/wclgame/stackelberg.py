"""Leader-side price-coefficient iteration over the lower EV game."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError
from .models import CostParams, Ev, Wcl, price
from .network import DistanceMatrix
from .pso import LowerGame, LowerOutcome, SwarmConfig, run_lower_game


@dataclass(frozen=True, eq=False)
class LeaderState:
    price_coeffs: np.ndarray
    desired_sales: np.ndarray
    iteration: int


@dataclass(frozen=True)
class HistoryRow:
    k: int
    lane: int
    q: float
    sold: float
    desired: float
    gap: float


@dataclass(frozen=True, eq=False)
class GameOutcome:
    leader: LeaderState
    lower: LowerOutcome | None
    history: tuple[HistoryRow, ...]
    converged: bool
    wcl_utility: float
    iterations: int
    stop_reason: str = ""
    traces: tuple[np.ndarray, ...] = field(default=(), repr=False)

    def gaps(self) -> np.ndarray:
        """Per-iteration max |sold - desired| over lanes."""
        if not self.history:
            return np.zeros(0)
        out = np.zeros(self.iterations)
        for row in self.history:
            out[row.k] = max(out[row.k], row.gap)
        return out


def leader_optimum(wcl: Wcl, q: float, mu: float) -> float:
    """Desired sales maximising revenue minus the squared deviation cost.

    Constrained to nonnegative sales at a nonnegative price.
    """
    if not mu > q:
        raise ValidationError(f"deviation cost {mu} must exceed the price coefficient {q}")
    p0, target = wcl.base_price, wcl.predicted_sales
    best = ((2 * mu - q) * target + p0) / (2 * (mu - q))
    lo, hi = 0.0, np.inf
    if q > 0:
        lo = max(lo, target - p0 / q)
    elif q < 0:
        hi = target + p0 / -q
    return float(min(max(best, lo), max(hi, lo)))


def update_price_coeff(q, sold, desired, k: int, phi: float):
    if phi <= 0 or k < 0:
        raise ValidationError("need phi > 0 and k >= 0")
    return q + (np.asarray(sold) - np.asarray(desired)) / (phi + k)


def wcl_utility(wcls: Sequence[Wcl], desired, mu: float) -> float:
    return float(sum(price(w, u) * u - mu * (u - w.predicted_sales) ** 2
                     for w, u in zip(wcls, desired)))


def iterate_prices(wcls: Sequence[Wcl], q_init, respond: Callable[[list[Wcl], int], np.ndarray],
                   mu: float, sigma: float = 1.0, phi: float = 500.0,
                   max_iters: int = 50) -> GameOutcome:
    """Leader loop with an arbitrary follower.

    ``respond(lanes, k)`` returns the followers' per-lane sales for lanes
    priced with the current coefficients.
    """
    q = np.broadcast_to(np.asarray(q_init, dtype=float), (len(wcls),)).copy()
    history: list[HistoryRow] = []
    desired = np.zeros(len(wcls))
    converged, reason, k = False, "iteration cap", -1
    for k in range(max_iters):
        lanes = [replace(w, price_coeff=float(qj)) for w, qj in zip(wcls, q)]
        if any(qj >= mu for qj in q):
            reason = "price coefficient reached the deviation cost"
            k -= 1
            break
        sold = np.asarray(respond(lanes, k), dtype=float)
        desired = np.array([leader_optimum(w, w.price_coeff, mu) for w in lanes])
        gap = sold - desired
        history.extend(HistoryRow(k, j, float(q[j]), float(sold[j]), float(desired[j]), float(abs(gap[j])))
                       for j in range(len(wcls)))
        if np.all(np.abs(gap) <= sigma):
            converged, reason = True, "converged"
            break
        q = update_price_coeff(q, sold, desired, k, phi)
    lanes = [replace(w, price_coeff=float(qj)) for w, qj in zip(wcls, q)]
    return GameOutcome(LeaderState(q, desired, k), None, tuple(history), converged,
                       wcl_utility(lanes, desired, mu), k + 1, reason)


def sub_seed(master: int, k: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=(k,)).generate_state(1)[0])


def run_double_layer(evs: Sequence[Ev], wcls: Sequence[Wcl], params: CostParams,
                     matrix: DistanceMatrix, swarm: SwarmConfig, q_init=0.01,
                     max_outer_iters: int = 50, sigma: float = 1.0, phi: float = 500.0,
                     warm_start: bool = True) -> GameOutcome:
    """Alternate lower-game solves and price updates until sales match.

    Each outer iteration reruns the swarm with a sub-seed of ``swarm.seed``;
    with ``warm_start`` the previous equilibrium joins the initial swarm.
    """
    routes: dict = {}
    state: dict = {"lower": None, "traces": []}

    def respond(lanes, k):
        game = LowerGame(evs, lanes, params, matrix, swarm.penalty_weight, route_cache=routes)
        prev = state["lower"]
        anchors = (prev.selections,) if warm_start and prev is not None else ()
        out = run_lower_game(evs, lanes, params, matrix, replace(swarm, seed=sub_seed(swarm.seed, k)),
                             anchors=anchors, game=game)
        state["lower"] = out
        state["traces"].append(out.fitness_trace)
        return out.sold

    res = iterate_prices(wcls, q_init, respond, params.dev_cost_coeff, sigma, phi, max_outer_iters)
    return replace(res, lower=state["lower"], traces=tuple(state["traces"]))
