"""Cost and benefit formulas for charging lanes and vehicles.

Units are fixed throughout: kWh, km, hours, vehicles per hour and currency
units per kWh for prices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InfeasibleError, ValidationError
from .network import DIST_TOL, DistanceMatrix


@dataclass(frozen=True)
class Wcl:
    """A wireless charging lane laid on the road ``entry -> exit``."""

    id: int
    entry: int
    exit: int
    lane_len: float = 0.04
    power: float = 200.0
    avg_speed: float = 40.0
    predicted_flow: float = 10.0
    predicted_sales: float = 0.0
    base_price: float = 0.5
    price_coeff: float = 0.01
    light_cycles: float = 30.0
    red_duration: float = 0.01
    min_leave_speed: float = 5.0
    stop_gap: float = 0.006
    lin_a: float | None = None
    lin_d: float | None = None

    def __post_init__(self):
        for name in ("lane_len", "power", "avg_speed", "predicted_flow"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"lane {self.id}: {name} must be positive")
        for name in ("light_cycles", "red_duration", "min_leave_speed", "stop_gap"):
            if getattr(self, name) < 0:
                raise ValidationError(f"lane {self.id}: {name} must be nonnegative")
        if self.min_leave_speed == 0:
            raise ValidationError(f"lane {self.id}: min_leave_speed must be positive")
        if self.predicted_sales < 0:
            raise ValidationError(f"lane {self.id}: predicted_sales must be nonnegative")
        if self.entry == self.exit:
            raise ValidationError(f"lane {self.id}: entry and exit must differ")
        if self.lin_a is None or self.lin_d is None:
            lin = linearize_max_charge(self)
            object.__setattr__(self, "lin_a", lin.a)
            object.__setattr__(self, "lin_d", lin.d)


@dataclass(frozen=True)
class Ev:
    id: int
    start: int
    dest: int
    soc_init: float
    value_coeff: float
    soc_max: float = 5.0
    soc_min: float = 0.5

    def __post_init__(self):
        if not self.soc_min < self.soc_init <= self.soc_max:
            raise ValidationError(
                f"EV {self.id}: need soc_min < soc_init <= soc_max, got "
                f"{self.soc_min} / {self.soc_init} / {self.soc_max}")
        if not self.value_coeff > 0:
            raise ValidationError(f"EV {self.id}: value_coeff must be positive")


@dataclass(frozen=True)
class CostParams:
    energy_per_km: float = 0.15
    time_per_km: float = 0.025
    wage: float = 10.0
    congestion_coeff: float = 0.01
    flow_band: float = 0.2
    dev_cost_coeff: float = 1.0
    penalty_weight: float = 50.0
    base_price: float = 0.5

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValidationError(f"cost parameter {name} must be nonnegative")
        if not 0 < self.flow_band < 1:
            raise ValidationError("flow_band must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class ChargingPlan:
    """One EV's decision: chosen lanes, charge per lane and the visiting order."""

    selection: np.ndarray
    charge: np.ndarray
    sequence: tuple[int, ...] = ()
    route_len: float = 0.0

    def __post_init__(self):
        sel = np.asarray(self.selection, dtype=np.int8)
        u = np.asarray(self.charge, dtype=np.float64)
        if sel.shape != u.shape:
            raise ValidationError("selection and charge rows differ in length")
        if np.any(u < 0) or np.any((u > 0) & (sel == 0)):
            raise ValidationError("charge on an unselected lane or negative charge")
        if sorted(self.sequence) != list(np.flatnonzero(sel)):
            raise ValidationError("sequence must list exactly the selected lanes")
        object.__setattr__(self, "selection", sel)
        object.__setattr__(self, "charge", u)
        object.__setattr__(self, "sequence", tuple(int(j) for j in self.sequence))


class Linearization(NamedTuple):
    a: float
    d: float
    c: float


def price(wcl: Wcl, sold: float, q: float | None = None) -> float:
    """Basic price plus deviation price, never below zero."""
    q = wcl.price_coeff if q is None else q
    return max(0.0, wcl.base_price + q * (sold - wcl.predicted_sales))


def max_charge_hourly(wcl: Wcl, flow: float, clamp: bool = True) -> float:
    """Average total charge delivered by the lane in one hour at ``flow``.

    Low flows can drive the queueing term below zero; ``clamp`` floors the
    result at zero.
    """
    if not flow > 0:
        raise ValidationError(f"flow must be positive, got {flow}")
    s = wcl.lane_len * flow / wcl.avg_speed
    xi = 2.0 * wcl.stop_gap / wcl.min_leave_speed - 1.0 / flow
    moving = wcl.power * wcl.lane_len * flow / wcl.avg_speed
    queued = wcl.power * wcl.light_cycles * s * (wcl.red_duration + 0.5 * (1.0 + s) * xi)
    return max(0.0, moving + queued) if clamp else moving + queued


def linearize_max_charge(wcl: Wcl) -> Linearization:
    """Coefficients of the hourly lane charge written as ``a f^2 + d f + c``.

    Dropping ``c`` leaves the per-vehicle cap ``a f + d``.
    """
    p, n, L, v = wcl.power, wcl.light_cycles, wcl.lane_len, wcl.avg_speed
    k = 2.0 * wcl.stop_gap / wcl.min_leave_speed
    a = p * n * k * L**2 / (2.0 * v**2)
    d = p * L / v + p * n * wcl.red_duration * L / v + p * n * k * L / (2.0 * v) - p * n * L**2 / (2.0 * v**2)
    c = -p * n * L / (2.0 * v)
    return Linearization(a, d, c)


def per_ev_max_charge(wcl: Wcl, flow: float) -> float:
    return max(0.0, wcl.lin_a * flow + wcl.lin_d)


def congestion_cost(params: CostParams, flow: float) -> float:
    return params.congestion_coeff * flow * flow


def congestion_potential(params: CostParams, flow: int) -> float:
    """Sum of the congestion cost over 1..flow vehicles."""
    f = int(flow)
    return params.congestion_coeff * f * (f + 1) * (2 * f + 1) / 6.0


def charging_value(ev: Ev, u: float) -> float:
    return ev.value_coeff * u


def route_extra_costs(params: CostParams, base_price: float, route_len: float,
                      shortest_len: float) -> tuple[float, float]:
    """Energy and time losses of a detour, priced in currency."""
    detour = route_len - shortest_len
    if detour < -DIST_TOL:
        raise InfeasibleError(
            f"route length {route_len} is shorter than the shortest path {shortest_len}")
    detour = max(detour, 0.0)
    return (base_price * params.energy_per_km * detour,
            params.wage * params.time_per_km * detour)


def route_legs(matrix: DistanceMatrix, s: int, d: int, lanes: Sequence[Wcl]) -> np.ndarray:
    """Distances driven between consecutive SOC checkpoints.

    Checkpoints are the start, the entry of every lane in order and the
    destination; a leg after a lane includes the lane's own road.
    """
    dist = matrix.dist
    legs = []
    pos, on_lane = s, 0.0
    for lane in lanes:
        legs.append(on_lane + dist[pos, lane.entry])
        pos, on_lane = lane.exit, dist[lane.entry, lane.exit]
    legs.append(on_lane + dist[pos, d])
    return np.array(legs, dtype=np.float64)


def soc_trajectory(ev: Ev, sequence: Sequence[Wcl], charges: Sequence[float],
                   matrix: DistanceMatrix, energy_per_km: float) -> np.ndarray:
    """SOC at the start, at the entry of each lane, and at the destination.

    The charge taken on a lane is credited on the following row.
    """
    if len(sequence) != len(charges):
        raise ValidationError("charges must align with the lane sequence")
    legs = route_legs(matrix, ev.start, ev.dest, sequence)
    credit = np.concatenate(([0.0], np.asarray(charges, dtype=np.float64)))
    return np.concatenate(([ev.soc_init], ev.soc_init + np.cumsum(credit - energy_per_km * legs)))


def _lane_totals(plans: Sequence[ChargingPlan], n_lanes: int) -> tuple[np.ndarray, np.ndarray]:
    if not plans:
        return np.zeros(n_lanes), np.zeros(n_lanes, dtype=int)
    sold = np.sum([p.charge for p in plans], axis=0)
    flow = np.sum([p.selection for p in plans], axis=0).astype(int)
    return sold, flow


def ev_cost_terms(ev: Ev, plan: ChargingPlan, lane_sold, lane_flow, wcls: Sequence[Wcl],
                  params: CostParams, matrix: DistanceMatrix) -> tuple[float, float, float]:
    """The charging, congestion and self terms of one EV's cost."""
    j1 = j2 = value = 0.0
    for j in np.flatnonzero(plan.selection):
        u = plan.charge[j]
        j1 += price(wcls[j], lane_sold[j]) * u
        j2 += congestion_cost(params, lane_flow[j])
        value += charging_value(ev, u)
    c, t = route_extra_costs(params, params.base_price, plan.route_len,
                             matrix.dist[ev.start, ev.dest])
    return j1, j2, c + t - value


def ev_cost(ev: Ev, plan: ChargingPlan, lane_sold, lane_flow, wcls: Sequence[Wcl],
            params: CostParams, matrix: DistanceMatrix) -> float:
    return sum(ev_cost_terms(ev, plan, lane_sold, lane_flow, wcls, params, matrix))


def potential_terms(evs: Sequence[Ev], plans: Sequence[ChargingPlan], wcls: Sequence[Wcl],
                    params: CostParams, matrix: DistanceMatrix) -> tuple[float, float, float]:
    sold, flow = _lane_totals(plans, len(wcls))
    phi1 = sum(price(w, sold[j]) * sold[j] for j, w in enumerate(wcls))
    phi2 = sum(congestion_potential(params, flow[j]) for j in range(len(wcls)))
    phi3 = 0.0
    for ev, plan in zip(evs, plans):
        c, t = route_extra_costs(params, params.base_price, plan.route_len,
                                 matrix.dist[ev.start, ev.dest])
        phi3 += c + t - charging_value(ev, float(plan.charge.sum()))
    return phi1, phi2, phi3


def potential_value(evs: Sequence[Ev], plans: Sequence[ChargingPlan], wcls: Sequence[Wcl],
                    params: CostParams, matrix: DistanceMatrix) -> float:
    return sum(potential_terms(evs, plans, wcls, params, matrix))
