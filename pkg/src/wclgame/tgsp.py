"""Charging-sequence routing: three-way greedy search and exact traversal."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .models import Wcl
from .network import DIST_TOL, DistanceMatrix

MAX_ORACLE_LANES = 9


@dataclass(frozen=True)
class ChargingSequence:
    lanes: tuple[int, ...]
    total_len: float
    method: str = ""


def _pick(candidates: list[Wcl], score) -> Wcl:
    # lowest lane id wins among near-equal scores
    scores = [score(w) for w in candidates]
    best = min(scores)
    return min((w for w, sc in zip(candidates, scores) if sc <= best + DIST_TOL), key=lambda w: w.id)


def _forward(dist, s, d, lanes):
    rest, order, total, last = list(lanes), [], 0.0, s
    while rest:
        j = _pick(rest, lambda w: dist[last, w.entry] + dist[w.entry, w.exit])
        total += dist[last, j.entry] + dist[j.entry, j.exit]
        last = j.exit
        order.append(j)
        rest.remove(j)
    return order, total + dist[last, d]


def _backward(dist, s, d, lanes):
    rest, order, total, last = list(lanes), [], 0.0, d
    while rest:
        j = _pick(rest, lambda w: dist[w.exit, last] + dist[w.entry, w.exit])
        total += dist[j.exit, last] + dist[j.entry, j.exit]
        last = j.entry
        order.insert(0, j)
        rest.remove(j)
    return order, total + dist[s, last]


def _both_ends(dist, s, d, lanes):
    rest, left, right, total = list(lanes), [], [], 0.0
    last_l, last_r = s, d
    for _ in range(len(lanes) // 2):
        j = _pick(rest, lambda w: dist[last_l, w.entry] + dist[w.entry, w.exit])
        total += dist[last_l, j.entry] + dist[j.entry, j.exit]
        last_l = j.exit
        left.append(j)
        rest.remove(j)
        j = _pick(rest, lambda w: dist[w.exit, last_r] + dist[w.entry, w.exit])
        total += dist[j.exit, last_r] + dist[j.entry, j.exit]
        last_r = j.entry
        right.insert(0, j)
        rest.remove(j)
    if rest:
        (j,) = rest
        total += dist[last_l, j.entry] + dist[j.entry, j.exit] + dist[j.exit, last_r]
        left.append(j)
    else:
        total += dist[last_l, last_r]
    return left + right, total


def tgsp(matrix: DistanceMatrix, s: int, d: int, lanes: Sequence[Wcl]) -> ChargingSequence:
    """Shortest of the forward, backward and both-ends greedy orderings.

    Every candidate length is the full ``s -> d`` route, terminal legs
    included. Lanes are driven entry to exit.
    """
    dist = matrix.dist
    best = None
    for name, search in (("forward", _forward), ("backward", _backward), ("both_ends", _both_ends)):
        order, total = search(dist, s, d, lanes)
        if best is None or total < best.total_len - DIST_TOL:
            best = ChargingSequence(tuple(w.id for w in order), float(total), name)
    return best


def sequence_length(matrix: DistanceMatrix, s: int, d: int, ordered: Sequence[Wcl]) -> float:
    dist = matrix.dist
    total, last = 0.0, s
    for w in ordered:
        total += dist[last, w.entry] + dist[w.entry, w.exit]
        last = w.exit
    return float(total + dist[last, d])


def traversal_oracle(matrix: DistanceMatrix, s: int, d: int, lanes: Sequence[Wcl],
                     both_directions: bool = False) -> ChargingSequence:
    """Exact minimum over all visiting orders (and optionally orientations)."""
    n = len(lanes)
    if n > MAX_ORACLE_LANES:
        raise ValidationError(
            f"traversal oracle refuses {n} lanes; at most {MAX_ORACLE_LANES} ({math.factorial(MAX_ORACLE_LANES)} orders)")
    dist = matrix.dist
    if n == 0:
        return ChargingSequence((), float(dist[s, d]), "traversal")
    lanes = sorted(lanes, key=lambda w: w.id)
    ends = [(w.entry, w.exit) for w in lanes]
    if both_directions:
        ends += [(w.exit, w.entry) for w in lanes]
    ends = np.array(ends)
    perms = np.array(list(itertools.permutations(range(n))))
    flips = (np.array(list(itertools.product((0, 1), repeat=n))) if both_directions
             else np.zeros((1, n), dtype=int))
    best_len, best_order = np.inf, None
    for flip in flips:
        idx = perms + n * flip[perms]
        b, e = ends[idx, 0], ends[idx, 1]
        total = dist[s, b[:, 0]] + dist[e[:, -1], d] + dist[b, e].sum(axis=1)
        total += dist[e[:, :-1], b[:, 1:]].sum(axis=1)
        k = int(np.argmin(total))
        if total[k] < best_len - DIST_TOL:
            best_len, best_order = float(total[k]), perms[k]
    return ChargingSequence(tuple(lanes[i].id for i in best_order), best_len, "traversal")
