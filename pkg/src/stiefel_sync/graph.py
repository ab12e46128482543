"""Undirected weighted interaction graphs.

Vertices are numbered 1..N (the ordering of agents in a swarm).  Weights are
strictly positive and symmetric by construction.  File formats written by the
harness use 0-based agent positions; the off-by-one boundary lives entirely in
this module's index helpers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import GraphError
from .seeding import as_generator


@dataclass(frozen=True)
class Graph:
    """Undirected graph on vertices 1..n_vertices with positive edge weights."""

    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        n = self.n_vertices
        if n < 1:
            raise GraphError(f"need at least one vertex, got N = {n}")
        edges = tuple(tuple(sorted((int(i), int(j)))) for i, j in self.edges)
        weights = tuple(float(w) for w in self.weights)
        if len(weights) != len(edges):
            raise GraphError("weights and edges differ in length")
        seen = set()
        for (i, j), w in zip(edges, weights):
            if i == j:
                raise GraphError(f"self-loop at vertex {i}")
            if not (1 <= i < j <= n):
                raise GraphError(f"edge ({i}, {j}) outside vertex range 1..{n}")
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i}, {j})")
            if not w > 0:
                raise GraphError(f"non-positive weight {w} on edge ({i}, {j})")
            seen.add((i, j))
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def unit_weights(self) -> bool:
        return all(w == 1.0 for w in self.weights)

    def neighbors(self, i: int) -> tuple[int, ...]:
        """Sorted neighbors of vertex i (1-based)."""
        out = [j for (a, b) in self.edges for j in ((b,) if a == i else (a,) if b == i else ())]
        return tuple(sorted(out))

    def weight(self, i: int, j: int) -> float:
        key = tuple(sorted((i, j)))
        for e, w in zip(self.edges, self.weights):
            if e == key:
                return w
        raise GraphError(f"no edge ({i}, {j})")

    def weight_matrix(self) -> np.ndarray:
        """Symmetric N x N weight matrix indexed by 0-based agent position."""
        w = np.zeros((self.n_vertices, self.n_vertices))
        for (i, j), a in zip(self.edges, self.weights):
            w[i - 1, j - 1] = a
            w[j - 1, i - 1] = a
        return w

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ei, ej, w) with 0-based endpoint positions, one entry per edge."""
        if not self.edges:
            z = np.zeros(0, dtype=int)
            return z, z.copy(), np.zeros(0)
        ei = np.array([i - 1 for i, _ in self.edges], dtype=int)
        ej = np.array([j - 1 for _, j in self.edges], dtype=int)
        return ei, ej, np.array(self.weights)

    def max_weighted_degree(self) -> float:
        return float(self.weight_matrix().sum(axis=1).max())


def is_connected(g: Graph) -> bool:
    """Breadth-first search from vertex 1 reaches every vertex."""
    if g.n_vertices == 1:
        return True
    adj: dict[int, list[int]] = {i: [] for i in range(1, g.n_vertices + 1)}
    for i, j in g.edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {1}
    queue = deque([1])
    while queue:
        v = queue.popleft()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return len(seen) == g.n_vertices


def cycle(n: int) -> Graph:
    """Cycle graph: edges {i, i+1} for i < N plus the closing edge {1, N}."""
    if n < 3:
        raise GraphError(f"cycle needs N >= 3, got {n}")
    edges = [(i, i + 1) for i in range(1, n)] + [(1, n)]
    return Graph(n, tuple(edges), (1.0,) * n)


def path(n: int) -> Graph:
    """Path graph on N vertices (N - 1 unit-weight edges)."""
    if n < 2:
        raise GraphError(f"path needs N >= 2, got {n}")
    edges = tuple((i, i + 1) for i in range(1, n))
    return Graph(n, edges, (1.0,) * (n - 1))


def complete(n: int) -> Graph:
    """Complete graph on N vertices (N(N-1)/2 unit-weight edges)."""
    if n < 2:
        raise GraphError(f"complete graph needs N >= 2, got {n}")
    edges = tuple((i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1))
    return Graph(n, edges, (1.0,) * len(edges))


def random_connected(n: int, edge_prob: float, rng, max_attempts: int = 1000) -> Graph:
    """Erdos-Renyi G(N, q) sample, resampled until connected; unit weights."""
    if n < 2:
        raise GraphError(f"need N >= 2, got {n}")
    if not 0 < edge_prob <= 1:
        raise GraphError(f"edge_prob must lie in (0, 1], got {edge_prob}")
    gen = as_generator(rng)
    for _ in range(max_attempts):
        edges = tuple(
            (i, j)
            for i in range(1, n + 1)
            for j in range(i + 1, n + 1)
            if gen.uniform() < edge_prob
        )
        g = Graph(n, edges, (1.0,) * len(edges))
        if is_connected(g):
            return g
    raise GraphError(
        f"no connected sample of G({n}, {edge_prob}) in {max_attempts} attempts"
    )


def from_spec(spec: dict) -> Graph:
    """Build a graph from its config description.

    Accepted shapes: {"type": "cycle" | "path" | "complete", "N": int} and
    {"type": "erdos_renyi", "N": int, "edge_prob": float, "seed": int?}.
    """
    if not isinstance(spec, dict):
        raise GraphError(f"graph spec must be an object, got {type(spec).__name__}")
    kind = spec.get("type")
    n = spec.get("N")
    if not isinstance(n, int) or isinstance(n, bool):
        raise GraphError(f"graph spec needs an integer N, got {n!r}")
    if kind == "cycle":
        return cycle(n)
    if kind == "path":
        return path(n)
    if kind == "complete":
        return complete(n)
    if kind == "erdos_renyi":
        if "edge_prob" not in spec:
            raise GraphError("erdos_renyi spec needs edge_prob")
        seed = spec.get("seed", 0)
        return random_connected(n, float(spec["edge_prob"]), int(seed))
    raise GraphError(f"unknown graph type {kind!r}")
