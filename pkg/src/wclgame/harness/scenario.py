"""Scenario records, TOML persistence and the synthetic paper-style scenario.

File layout (TOML)::

    [network]            nodes = 31, edges = [[from, to, length_km], ...]
    [[lanes]]            id, entry, exit and physical lane parameters
    [params]             cost coefficients (CostParams fields)
    [game]               sigma, phi, q_init, max_outer_iters, warm_start, seed,
                         utilization
    [game.swarm]         SwarmConfig fields (seed comes from [game])
    [[cohorts]]          hour, predicted_flow = [...], predicted_sales = [...]
    [[cohorts.evs]]      id, start, dest, soc_init, value_coeff, soc_max, soc_min

``predicted_flow`` / ``predicted_sales`` are per-lane lists; when
``predicted_sales`` is omitted it is derived as flow x per-EV cap x
``utilization``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import tomli
import tomli_w

from ..errors import ValidationError
from ..models import CostParams, Ev, Wcl, per_ev_max_charge
from ..network import RoadNetwork, build_distance_matrix, build_grid_network, grid_node
from ..pso import SwarmConfig

SOC_BUCKETS = (2.5, 3.0, 3.5, 4.0, 4.5, 5.0)
PAPER_COHORTS = (24, 33, 42, 51, 60)


@dataclass(frozen=True)
class GameConfig:
    sigma: float = 1.0
    phi: float = 500.0
    q_init: float = 0.01
    max_outer_iters: int = 50
    warm_start: bool = True
    seed: int = 0
    utilization: float = 0.5
    swarm: SwarmConfig = field(default_factory=SwarmConfig)

    def __post_init__(self):
        if self.sigma <= 0 or self.phi <= 0 or self.max_outer_iters < 1:
            raise ValidationError("game: need sigma > 0, phi > 0, max_outer_iters >= 1")
        if not 0 < self.utilization <= 1:
            raise ValidationError("game: utilization must lie in (0, 1]")


@dataclass(frozen=True)
class Cohort:
    hour: int
    evs: tuple[Ev, ...]
    predicted_flow: tuple[float, ...]
    predicted_sales: tuple[float, ...]


@dataclass(frozen=True)
class Scenario:
    network: RoadNetwork
    wcls: tuple[Wcl, ...]
    cohorts: tuple[Cohort, ...]
    params: CostParams = field(default_factory=CostParams)
    game: GameConfig = field(default_factory=GameConfig)

    def __post_init__(self):
        validate(self)

    def lanes_for(self, cohort: Cohort) -> list[Wcl]:
        """Lanes carrying the cohort's hourly predictions and the initial price coefficient."""
        return [replace(w, predicted_flow=f, predicted_sales=u, price_coeff=self.game.q_init)
                for w, f, u in zip(self.wcls, cohort.predicted_flow, cohort.predicted_sales)]

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, game=replace(self.game, seed=seed))


def validate(sc: Scenario) -> None:
    n = sc.network.n_nodes
    build_distance_matrix(sc.network)
    for j, w in enumerate(sc.wcls):
        if w.id != j:
            raise ValidationError(f"lanes[{j}]: id must equal its position ({j}), got {w.id}")
        for name in ("entry", "exit"):
            if not 0 <= getattr(w, name) < n:
                raise ValidationError(f"lane {w.id}: {name} node {getattr(w, name)} is not in the network")
    for p, w in enumerate(sc.wcls):
        if w.price_coeff >= sc.params.dev_cost_coeff:
            raise ValidationError(f"lane {w.id}: dev_cost_coeff must exceed price_coeff")
    if sc.game.q_init >= sc.params.dev_cost_coeff:
        raise ValidationError("params: dev_cost_coeff must exceed game.q_init")
    hours = [c.hour for c in sc.cohorts]
    if any(b <= a for a, b in zip(hours, hours[1:])):
        raise ValidationError(f"cohort hours must be strictly increasing, got {hours}")
    for c in sc.cohorts:
        if len(c.predicted_flow) != len(sc.wcls) or len(c.predicted_sales) != len(sc.wcls):
            raise ValidationError(f"cohort hour {c.hour}: need one prediction per lane")
        if any(f <= 0 for f in c.predicted_flow) or any(u < 0 for u in c.predicted_sales):
            raise ValidationError(f"cohort hour {c.hour}: predicted flow must be > 0 and sales >= 0")
        for ev in c.evs:
            for name in ("start", "dest"):
                if not 0 <= getattr(ev, name) < n:
                    raise ValidationError(
                        f"cohort hour {c.hour}, EV {ev.id}: {name} node {getattr(ev, name)} is not in the network")


def predicted_sales(wcl: Wcl, flow: float, utilization: float) -> float:
    return flow * per_ev_max_charge(wcl, flow) * utilization


# -- persistence -------------------------------------------------------------

def _build(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValidationError(f"{where}: unknown field(s) {sorted(unknown)}")
    try:
        return cls(**data)
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None
    except TypeError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def scenario_from_dict(doc: dict[str, Any]) -> Scenario:
    try:
        net = doc["network"]
        network = _build(RoadNetwork, {"n_nodes": net["nodes"],
                                       "edges": tuple(tuple(e) for e in net["edges"])}, "network")
        wcls = tuple(_build(Wcl, dict(w), f"lanes[{j}]") for j, w in enumerate(doc.get("lanes", [])))
        params = _build(CostParams, dict(doc.get("params", {})), "params")
        game_doc = dict(doc.get("game", {}))
        swarm_doc = dict(game_doc.pop("swarm", {}))
        swarm_doc["seed"] = game_doc.get("seed", 0)
        game_doc["swarm"] = _build(SwarmConfig, swarm_doc, "game.swarm")
        game = _build(GameConfig, game_doc, "game")
        cohorts = []
        for c_i, c in enumerate(doc.get("cohorts", [])):
            where = f"cohorts[{c_i}]"
            evs = tuple(_build(Ev, dict(e), f"{where}.evs[{k}]") for k, e in enumerate(c.get("evs", [])))
            flow = tuple(float(f) for f in c["predicted_flow"])
            if "predicted_sales" in c:
                sales = tuple(float(u) for u in c["predicted_sales"])
            else:
                if len(flow) != len(wcls):
                    raise ValidationError(f"{where}: need one predicted flow per lane")
                sales = tuple(predicted_sales(w, f, game.utilization) for w, f in zip(wcls, flow))
            cohorts.append(Cohort(int(c["hour"]), evs, flow, sales))
    except KeyError as exc:
        raise ValidationError(f"missing required field {exc}") from None
    return Scenario(network, wcls, tuple(cohorts), params, game)


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    swarm = dataclasses.asdict(sc.game.swarm)
    swarm.pop("seed")
    swarm = {k: v for k, v in swarm.items() if v is not None}
    game = {k: v for k, v in dataclasses.asdict(sc.game).items() if k != "swarm"}
    game["swarm"] = swarm
    return {
        "network": {"nodes": sc.network.n_nodes, "edges": [list(e) for e in sc.network.edges]},
        "lanes": [dataclasses.asdict(w) for w in sc.wcls],
        "params": dataclasses.asdict(sc.params),
        "game": game,
        "cohorts": [{"hour": c.hour, "predicted_flow": list(c.predicted_flow),
                     "predicted_sales": list(c.predicted_sales),
                     "evs": [dataclasses.asdict(e) for e in c.evs]} for c in sc.cohorts],
    }


def load_scenario(path) -> Scenario:
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: parse error: {exc}") from None
    return scenario_from_dict(doc)


def save_scenario(sc: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(tomli_w.dumps(scenario_to_dict(sc)))
    return path


# -- synthetic scenarios -----------------------------------------------------

PAPER_LANES = (((1, 1), (1, 2)), ((1, 3), (2, 3)), ((2, 2), (3, 2)), ((3, 3), (3, 4)))
# Lane physics are not published; these make one pass worth 0.4 kWh so that the
# day-ahead sales gap is large enough for the price iteration to do some work.
PAPER_LANE_PHYSICS = {"power": 300.0, "avg_speed": 30.0}


def paper_network(rows: int = 5, cols: int = 6, edge_len: float = 1.0) -> RoadNetwork:
    """5x6 lattice of 1 km roads plus one spur east of the NE corner: 50 roads."""
    grid = build_grid_network(rows, cols, edge_len)
    corner = grid_node(rows - 1, cols - 1, cols)
    return RoadNetwork(grid.n_nodes + 1, grid.edges + ((corner, grid.n_nodes, edge_len),))


def value_coeff(soc_init: float, soc_max: float = 5.0, soc_low: float = 2.5,
                lo: float = 0.1, hi: float = 1.5) -> float:
    """Charging value per kWh, decreasing linearly from ``hi`` at ``soc_low`` to ``lo`` at full."""
    frac = (soc_max - soc_init) / (soc_max - soc_low)
    return lo + (hi - lo) * min(max(frac, 0.0), 1.0)


def generate_paper_scenario(seed: int = 0, cohort_sizes=PAPER_COHORTS, lane_share: float = 0.25,
                            **lane_kw) -> Scenario:
    lane_kw = {**PAPER_LANE_PHYSICS, **lane_kw}
    rows, cols = 5, 6
    network = paper_network(rows, cols)
    wcls = tuple(Wcl(j, grid_node(*a, cols), grid_node(*b, cols), **lane_kw)
                 for j, (a, b) in enumerate(PAPER_LANES))
    sw = [grid_node(r, c, cols) for r in (0, 1) for c in (0, 1)]
    ne = [grid_node(r, c, cols) for r in (rows - 2, rows - 1) for c in (cols - 2, cols - 1)]
    game = GameConfig(seed=seed, swarm=SwarmConfig(seed=seed))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xC0407,)))
    cohorts, next_id = [], 0
    for hour, size in enumerate(cohort_sizes):
        evs = []
        for _ in range(size):
            soc = float(np.round(rng.uniform(2.5, 5.0), 6))
            soc = min(max(soc, 2.5), 5.0)
            evs.append(Ev(next_id, int(rng.choice(sw)), int(rng.choice(ne)), soc, value_coeff(soc)))
            next_id += 1
        flow = tuple(float(lane_share * size) for _ in wcls)
        sales = tuple(predicted_sales(w, f, game.utilization) for w, f in zip(wcls, flow))
        cohorts.append(Cohort(hour, tuple(evs), flow, sales))
    return Scenario(network, wcls, tuple(cohorts), CostParams(), game)
