"""Symmetric traveling salesman problem for both engines.

Tours are plain lists of city indices. A complete tour visits every city once;
its cost includes the closing edge back to the first city. Branch and bound
grows tours one city at a time from the empty path.
"""
from __future__ import annotations

import json
import math
import random
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .annealing import SimAnnealProblem, sigmoid_temperature
from .bnb import BnBProblem
from .problem import ContractViolation, dump_json

Tour = list


class CityGraph:
    """Distance matrix of a symmetric TSP instance.

    Equality is exact: two graphs are equal iff their matrices have the same
    shape and identical entries. ``coords`` is kept when the instance was
    built from points but takes no part in equality.
    """

    def __init__(self, dist, coords=None):
        dist = np.array(dist, dtype=np.float64)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] < 1:
            raise ValueError(f"distance matrix must be square and non-empty, got shape {dist.shape}")
        if not np.all(np.isfinite(dist)):
            raise ValueError("distance matrix has non-finite entries")
        if np.any(dist < 0):
            raise ValueError("distance matrix has negative entries")
        if not np.array_equal(dist, dist.T):
            raise ValueError("distance matrix is not symmetric")
        if np.any(np.diag(dist) != 0):
            raise ValueError("distance matrix has a non-zero diagonal")
        dist.setflags(write=False)
        self.dist = dist
        self.coords = None if coords is None else np.array(coords, dtype=np.float64)
        self.rows = dist.tolist()

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def __eq__(self, other):
        if not isinstance(other, CityGraph):
            return NotImplemented
        return self.dist.shape == other.dist.shape and bool(np.array_equal(self.dist, other.dist))

    def __repr__(self):
        return f"CityGraph(n={self.n})"

    def to_bytes(self) -> bytes:
        return dump_json({"n": self.n, "matrix": self.rows})

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CityGraph":
        data = json.loads(blob)
        return cls(data["matrix"])

    @classmethod
    def from_coords(cls, coords) -> "CityGraph":
        return cls(distance_matrix(coords), coords=coords)


def distance_matrix(coords) -> np.ndarray:
    """Pairwise Euclidean distances; ``math.hypot`` on every pair, filled symmetrically."""
    pts = [(float(x), float(y)) for x, y in coords]
    n = len(pts)
    dist = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        xi, yi = pts[i]
        for j in range(i + 1, n):
            d = math.hypot(xi - pts[j][0], yi - pts[j][1])
            dist[i, j] = dist[j, i] = d
    return dist


def gaussian_points(n: int, rng: random.Random, mu: float = 0.0, sigma: float = 5.0) -> list:
    """``n`` 2-D points, both coordinates i.i.d. normal, via Box-Muller.

    Each point consumes two uniforms from ``rng``: its x and y are the cosine
    and sine outputs of one Box-Muller transform.
    """
    points = []
    for _ in range(n):
        u1 = 1.0 - rng.random()  # (0, 1], keeps log finite
        u2 = rng.random()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        points.append([mu + sigma * r * math.cos(theta), mu + sigma * r * math.sin(theta)])
    return points


def generate_instance(n: int, seed: int, mu: float = 0.0, sigma: float = 5.0) -> CityGraph:
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return CityGraph.from_coords(gaussian_points(n, random.Random(seed), mu, sigma))


def load_instance(path: Union[str, Path]) -> CityGraph:
    """Read a JSON instance holding ``matrix`` and/or ``coords`` (matrix wins)."""
    with open(path, "rb") as fh:
        data = json.load(fh)
    if "matrix" in data:
        graph = CityGraph(data["matrix"], coords=data.get("coords"))
    elif "coords" in data:
        graph = CityGraph.from_coords(data["coords"])
    else:
        raise ValueError(f"{path}: instance needs a 'matrix' or 'coords' field")
    if "n" in data and data["n"] != graph.n:
        raise ValueError(f"{path}: n={data['n']} disagrees with a {graph.n}-city matrix")
    return graph


def instance_bytes(graph: CityGraph) -> bytes:
    data = {"n": graph.n, "matrix": graph.rows}
    if graph.coords is not None:
        data["coords"] = graph.coords.tolist()
    return dump_json(data)


# -- operators ----------------------------------------------------------------

def is_complete_tour(n: int, tour: Sequence[int]) -> bool:
    return len(tour) == n and len(set(tour)) == n and min(tour) >= 0 and max(tour) < n


def tour_cost(graph: CityGraph, tour: Sequence[int]) -> float:
    if not is_complete_tour(graph.n, tour):
        raise ContractViolation(
            f"TravelingSalesman: cost needs a complete tour of {graph.n} cities, got {list(tour)!r}")
    return _cycle_length(graph.rows, tour)


def _cycle_length(rows, tour) -> float:
    # fsum is correctly rounded, so the result depends only on the multiset of
    # edge weights: rotations and reversals of a tour cost exactly the same
    return math.fsum(map(list.__getitem__, map(rows.__getitem__, tour), tour[1:] + tour[:1]))


def _path_edges(rows, tour) -> list:
    return [rows[a][b] for a, b in zip(tour, tour[1:])]


def swap_positions(tour: Sequence[int], i: int, j: int) -> Tour:
    out = list(tour)
    out[i], out[j] = out[j], out[i]
    return out


def swap_candidate(tour: Sequence[int], rng: random.Random) -> Tour:
    """Copy of ``tour`` with two distinct positions exchanged, pair chosen uniformly."""
    n = len(tour)
    if n < 2:
        return list(tour)
    i = rng.randrange(n)
    j = rng.randrange(n - 1)
    if j >= i:
        j += 1
    return swap_positions(tour, i, j)


def random_tour(n: int, rng: random.Random) -> Tour:
    tour = list(range(n))
    rng.shuffle(tour)
    return tour


def tsp_branch(graph: CityGraph, partial: Sequence[int]) -> Iterator[Tour]:
    """Extend ``partial`` by each unvisited city, nearest to its last city first.

    Ties go to the lower city index. The empty path branches into every city
    in index order. Children are built lazily.
    """
    n = graph.n
    prefix = list(partial)
    if not prefix:
        order = range(n)
    else:
        visited = set(prefix)
        row = graph.rows[prefix[-1]]
        order = sorted((c for c in range(n) if c not in visited), key=lambda c: (row[c], c))
    for city in order:
        yield prefix + [city]


class _SortedPairs:
    """All unordered city pairs sorted by distance, then by index."""

    def __init__(self, graph: CityGraph):
        rows = graph.rows
        n = graph.n
        pairs = [(rows[i][j], i, j) for i in range(n) for j in range(i + 1, n)]
        pairs.sort()
        self.weights = [w for w, _, _ in pairs]
        self.keys = [(i, j) for _, i, j in pairs]


def tsp_lbound(graph: CityGraph, partial: Sequence[int], pairs: Optional[_SortedPairs] = None) -> float:
    """Length of the partial path plus the ``k`` cheapest pairs it does not use.

    ``k`` counts the edges still missing from a full cycle: ``n - m + 1`` for
    a path of ``m >= 1`` cities and ``n`` for the empty path. If fewer than
    ``k`` unused pairs exist (only when ``n <= 2``) all of them are taken.
    Summing with ``fsum``, like the tour cost, keeps the bound valid after
    rounding, not just in exact arithmetic.
    """
    if pairs is None:
        pairs = _SortedPairs(graph)
    n = graph.n
    m = len(partial)
    k = n if m == 0 else n - m + 1
    used = {(a, b) if a < b else (b, a) for a, b in zip(partial, partial[1:])}
    terms = _path_edges(graph.rows, partial)
    taken = 0
    for w, key in zip(pairs.weights, pairs.keys):
        if taken == k:
            break
        if key in used:
            continue
        terms.append(w)
        taken += 1
    return math.fsum(terms)


def tsp_complete(graph: CityGraph, partial: Sequence[int], rng: random.Random) -> Tour:
    """Append the unvisited cities to ``partial`` in a uniformly random order."""
    visited = set(partial)
    rest = [c for c in range(graph.n) if c not in visited]
    rng.shuffle(rest)
    return list(partial) + rest


def tsp_temperature(x: float) -> float:
    return sigmoid_temperature(x, 10000.0)


class TravelingSalesman(SimAnnealProblem, BnBProblem):
    """TSP with both the annealing and the branch-and-bound hooks.

    ``initial`` selects what :meth:`get_initial_solution` returns:
    ``"identity"`` (cities in increasing order), ``None`` (no initial
    solution), or an explicit complete tour.
    """

    def __init__(self, graph: CityGraph, initial: Union[str, Sequence[int], None] = "identity"):
        self.graph = graph
        if isinstance(initial, str):
            if initial != "identity":
                raise ValueError(f"unknown initial solution {initial!r}")
            self._initial = list(range(graph.n))
        elif initial is None:
            self._initial = None
        else:
            self._initial = list(initial)
            if not is_complete_tour(graph.n, self._initial):
                raise ContractViolation(
                    f"TravelingSalesman: initial tour {self._initial!r} is not complete")
        self._pairs = _SortedPairs(graph)

    @property
    def n(self) -> int:
        return self.graph.n

    def get_initial_solution(self) -> Optional[Tour]:
        return None if self._initial is None else list(self._initial)

    def cost(self, solution: Sequence[int]) -> float:
        return tour_cost(self.graph, solution)

    def params(self) -> CityGraph:
        return self.graph

    def serialize_params(self) -> bytes:
        return self.graph.to_bytes()

    @classmethod
    def deserialize_params(cls, blob: bytes) -> CityGraph:
        return CityGraph.from_bytes(blob)

    def decode_solution(self, data) -> Tour:
        return [int(c) for c in data]

    # simulated annealing

    def next_candidate(self, current, rng):
        return swap_candidate(current, rng)

    def reset_candidate(self, rng):
        return random_tour(self.n, rng)

    def get_temperature(self, iters_since_reset):
        return tsp_temperature(iters_since_reset)

    # branch and bound

    def get_root(self) -> Tour:
        return []

    def branch(self, partial):
        return tsp_branch(self.graph, partial)

    def lbound(self, partial) -> float:
        return tsp_lbound(self.graph, partial, self._pairs)

    def is_feasible(self, solution) -> bool:
        return is_complete_tour(self.n, solution)

    def complete_solution(self, partial, rng):
        return tsp_complete(self.graph, partial, rng)
