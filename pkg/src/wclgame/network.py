"""Road graph and all-pairs shortest distances."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

DIST_TOL = 1e-9


@dataclass(frozen=True)
class RoadNetwork:
    """Undirected road graph; node ids are dense integers ``0..n-1``."""

    n_nodes: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValidationError("network needs at least one intersection")
        edges = tuple((int(a), int(b), float(w)) for a, b, w in self.edges)
        for a, b, w in edges:
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes):
                raise ValidationError(f"edge ({a}, {b}) references an undeclared intersection")
            if not w > 0:
                raise ValidationError(f"edge ({a}, {b}) has non-positive length {w}")
        object.__setattr__(self, "edges", edges)

    @property
    def intersections(self) -> range:
        return range(self.n_nodes)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    dist: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.array(self.dist, dtype=np.float64)
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)

    @property
    def n_nodes(self) -> int:
        return self.dist.shape[0]

    def __getitem__(self, key):
        return self.dist[key]


def build_distance_matrix(network: RoadNetwork) -> DistanceMatrix:
    """Floyd-Warshall over a bidirectional road graph.

    Parallel edges keep the shortest length. Raises ``ValidationError`` naming
    the first unreachable pair if the graph is disconnected.
    """
    n = network.n_nodes
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for a, b, w in network.edges:
        if w < d[a, b]:
            d[a, b] = d[b, a] = w
    for k in range(n):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    if not np.isfinite(d).all():
        a, b = np.argwhere(~np.isfinite(d))[0]
        raise ValidationError(f"network is disconnected: no path between {a} and {b}")
    return DistanceMatrix(d)


def shortest_length(matrix: DistanceMatrix, s: int, d: int) -> float:
    n = matrix.n_nodes
    for v in (s, d):
        if not (isinstance(v, (int, np.integer)) and 0 <= v < n):
            raise ValidationError(f"unknown node id {v!r} (network has {n} nodes)")
    return float(matrix.dist[s, d])


def grid_node(row: int, col: int, cols: int) -> int:
    return row * cols + col


def build_grid_network(rows: int, cols: int, edge_len: float) -> RoadNetwork:
    """Rectangular lattice, row 0 is the southern edge, column 0 the western."""
    if rows < 2 or cols < 2:
        raise ValidationError(f"grid needs at least 2x2 intersections, got {rows}x{cols}")
    if not edge_len > 0:
        raise ValidationError(f"edge length must be positive, got {edge_len}")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = grid_node(r, c, cols)
            if c + 1 < cols:
                edges.append((v, v + 1, edge_len))
            if r + 1 < rows:
                edges.append((v, v + cols, edge_len))
    return RoadNetwork(rows * cols, tuple(edges))
