"""Feature graphs: topology generators, Laplacian utilities, precision support.

Graphs are simple and undirected, stored as an explicit edge array plus the
dense combinatorial Laplacian L = D - A (feature counts here are small
enough that dense storage wins).  The three benchmark topologies are
generated from the package's own RandomSource so that edge sets are
reproducible bit-for-bit across platforms, with documented conventions:

* Erdos-Renyi: every pair independently with probability ``edge_prob``.
* Barabasi-Albert: seed is a complete graph on ``attach_m + 1`` nodes; each
  later node attaches ``attach_m`` edges preferentially by degree.  Edge
  count is therefore C(m+1, 2) + m * (p - m - 1) exactly.
* Watts-Strogatz: ring lattice of even degree ``ring_k``; each lattice edge
  rewired independently with probability ``rewire_prob`` avoiding self
  loops and duplicates (edge count preserved).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, Infeasible, InvalidParameter
from .numerics import RandomSource


class FeatureGraph:
    """Undirected simple graph on ``p`` feature nodes.

    Immutable after construction; exposes adjacency, degrees, and the
    combinatorial Laplacian as dense arrays.
    """

    def __init__(self, p: int, edges):
        if p < 1:
            raise InvalidParameter(f"graph needs p >= 1, got {p}")
        self.p = int(p)
        canon = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidParameter(f"self-loop on node {i}")
            if not (0 <= i < p and 0 <= j < p):
                raise InvalidParameter(f"edge ({i},{j}) outside 0..{p - 1}")
            canon.add((min(i, j), max(i, j)))
        self.edges = np.array(sorted(canon), dtype=int).reshape(-1, 2)

        adj = np.zeros((p, p))
        if len(self.edges):
            adj[self.edges[:, 0], self.edges[:, 1]] = 1.0
            adj[self.edges[:, 1], self.edges[:, 0]] = 1.0
        self.adjacency = adj
        self.degrees = adj.sum(axis=1).astype(int)
        self.laplacian = np.diag(self.degrees.astype(float)) - adj

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def density(self) -> float:
        """Realized |E| / C(p, 2)."""
        if self.p < 2:
            return 0.0
        return self.edge_count / (self.p * (self.p - 1) / 2)

    def neighbors(self, node: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[node] > 0)

    def bfs_distances(self, source: int) -> np.ndarray:
        """Unweighted shortest-path hop counts; unreachable nodes get -1."""
        dist = np.full(self.p, -1, dtype=int)
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in self.neighbors(u):
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def connected_components(self) -> int:
        seen = np.zeros(self.p, dtype=bool)
        count = 0
        for start in range(self.p):
            if seen[start]:
                continue
            count += 1
            queue = deque([start])
            seen[start] = True
            while queue:
                u = queue.popleft()
                for v in self.neighbors(u):
                    if not seen[v]:
                        seen[v] = True
                        queue.append(v)
        return count

    def to_edge_list(self) -> str:
        """One '"i j"' pair per line, 0-indexed."""
        return "\n".join(f"{i} {j}" for i, j in self.edges) + ("\n" if len(self.edges) else "")

    @classmethod
    def from_edge_list(cls, p: int, text: str) -> "FeatureGraph":
        edges = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            i, j = line.split()
            edges.append((int(i), int(j)))
        return cls(p, edges)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FeatureGraph)
            and self.p == other.p
            and self.edges.shape == other.edges.shape
            and bool(np.all(self.edges == other.edges))
        )


# --- topology descriptors -------------------------------------------------

@dataclass(frozen=True)
class ErdosRenyi:
    edge_prob: float
    name = "ER"

    def __post_init__(self):
        if not 0.0 <= self.edge_prob <= 1.0:
            raise InvalidParameter(f"edge_prob must lie in [0, 1], got {self.edge_prob}")


@dataclass(frozen=True)
class BarabasiAlbert:
    attach_m: int
    name = "BA"

    def __post_init__(self):
        if self.attach_m < 1:
            raise InvalidParameter(f"attach_m must be >= 1, got {self.attach_m}")


@dataclass(frozen=True)
class WattsStrogatz:
    ring_k: int
    rewire_prob: float
    name = "WS"

    def __post_init__(self):
        if self.ring_k < 2 or self.ring_k % 2 != 0:
            raise InvalidParameter(f"ring_k must be even and >= 2, got {self.ring_k}")
        if not 0.0 <= self.rewire_prob <= 1.0:
            raise InvalidParameter(f"rewire_prob must lie in [0, 1], got {self.rewire_prob}")


TopologyKind = ErdosRenyi | BarabasiAlbert | WattsStrogatz


def generate(kind: TopologyKind, p: int, rs: RandomSource) -> FeatureGraph:
    """Sample a graph of the given topology on p >= 3 nodes."""
    if p < 3:
        raise InvalidParameter(f"generate needs p >= 3, got {p}")
    if isinstance(kind, ErdosRenyi):
        return _generate_er(kind, p, rs)
    if isinstance(kind, BarabasiAlbert):
        return _generate_ba(kind, p, rs)
    if isinstance(kind, WattsStrogatz):
        return _generate_ws(kind, p, rs)
    raise InvalidParameter(f"unknown topology kind {kind!r}")


def _generate_er(kind: ErdosRenyi, p: int, rs: RandomSource) -> FeatureGraph:
    rows, cols = np.triu_indices(p, k=1)
    mask = rs.uniform(len(rows)) < kind.edge_prob
    return FeatureGraph(p, zip(rows[mask], cols[mask]))


def _generate_ba(kind: BarabasiAlbert, p: int, rs: RandomSource) -> FeatureGraph:
    m = kind.attach_m
    if m >= p:
        raise InvalidParameter(f"attach_m={m} must be < p={p}")
    edges = [(i, j) for i in range(m + 1) for j in range(i + 1, m + 1)]
    # One entry per endpoint: sampling uniformly from this list is sampling
    # proportionally to degree.
    repeated = [node for edge in edges for node in edge]
    for new in range(m + 1, p):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(repeated[int(rs.integers(0, len(repeated)))])
        for t in sorted(targets):
            edges.append((t, new))
            repeated.extend((t, new))
    return FeatureGraph(p, edges)


def _generate_ws(kind: WattsStrogatz, p: int, rs: RandomSource) -> FeatureGraph:
    k = kind.ring_k
    if k >= p:
        raise InvalidParameter(f"ring_k={k} must be < p={p}")
    edge_set = set()
    for offset in range(1, k // 2 + 1):
        for i in range(p):
            j = (i + offset) % p
            edge_set.add((min(i, j), max(i, j)))
    for offset in range(1, k // 2 + 1):
        for i in range(p):
            j = (i + offset) % p
            old = (min(i, j), max(i, j))
            if old not in edge_set:
                continue  # already rewired away by an earlier pass
            if rs.uniform(1)[0] < kind.rewire_prob:
                if len(edge_set) >= p - 1 and _degree_of(edge_set, i) >= p - 1:
                    continue  # node saturated, nothing to rewire to
                while True:
                    w = int(rs.integers(0, p))
                    cand = (min(i, w), max(i, w))
                    if w != i and cand not in edge_set:
                        break
                edge_set.remove(old)
                edge_set.add(cand)
    return FeatureGraph(p, edge_set)


def _degree_of(edge_set: set[tuple[int, int]], node: int) -> int:
    return sum(1 for a, b in edge_set if a == node or b == node)


# --- density matching -----------------------------------------------------

def _ba_edge_count(p: int, m: int) -> int:
    return m * (m + 1) // 2 + m * (p - m - 1)


def expected_density(kind: TopologyKind, p: int) -> float:
    """Expected |E| / C(p, 2) under the generator's conventions.

    Exact (non-random) for BA and WS; equal to edge_prob for ER.
    """
    pairs = p * (p - 1) / 2
    if isinstance(kind, ErdosRenyi):
        return kind.edge_prob
    if isinstance(kind, BarabasiAlbert):
        return _ba_edge_count(p, kind.attach_m) / pairs
    if isinstance(kind, WattsStrogatz):
        return (p * kind.ring_k / 2) / pairs
    raise InvalidParameter(f"unknown topology kind {kind!r}")


def density_to_params(
    kind: str, p: int, target_density: float, rewire_prob: float = 0.1
) -> tuple[TopologyKind, float]:
    """Parameters whose expected density is the feasible value nearest target.

    Returns (kind, achieved_density).  ER matches any target exactly; BA and
    WS snap to their discrete feasible sets, so sweep outputs should always
    be keyed by the achieved value returned here.

    Raises
    ------
    Infeasible
        If the target lies strictly below the topology's minimum density.
    """
    if not 0.0 < target_density <= 1.0:
        raise InvalidParameter(f"target density must lie in (0, 1], got {target_density}")
    name = kind.upper()
    if name == "ER":
        return ErdosRenyi(edge_prob=target_density), target_density
    if name == "BA":
        feasible = {m: _ba_edge_count(p, m) / (p * (p - 1) / 2) for m in range(1, p)}
        min_density = min(feasible.values())
        if target_density < min_density:
            raise Infeasible(
                f"BA on p={p} cannot go below density {min_density:.4f}"
            )
        best_m = min(feasible, key=lambda m: (abs(feasible[m] - target_density), m))
        return BarabasiAlbert(attach_m=best_m), feasible[best_m]
    if name == "WS":
        min_density = 2.0 / (p - 1)
        if target_density < min_density:
            raise Infeasible(
                f"WS on p={p} needs ring_k >= 2, i.e. density >= {min_density:.4f}"
            )
        max_k = p - 1 if (p - 1) % 2 == 0 else p - 2
        ks = np.arange(2, max_k + 1, 2)
        achieved = ks / (p - 1)
        best = ks[int(np.argmin(np.abs(achieved - target_density)))]
        return WattsStrogatz(ring_k=int(best), rewire_prob=rewire_prob), best / (p - 1)
    raise InvalidParameter(f"unknown topology name {kind!r}")


# --- Laplacian utilities ----------------------------------------------------

def laplacian_quadratic(graph: FeatureGraph, v: np.ndarray) -> float:
    """tr(V.T @ L @ V): summed squared loading differences across edges."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if v.shape[0] == 1 and graph.p != 1 and v.shape[1] == graph.p:
        v = v.T
    if v.shape[0] != graph.p:
        raise DimensionMismatch(
            f"loadings have {v.shape[0]} rows, graph has {graph.p} nodes"
        )
    return float(np.sum(v * (graph.laplacian @ v)))


def adjacency_from_precision(theta: np.ndarray, threshold: float = 0.0) -> FeatureGraph:
    """Support graph of a precision matrix: edge (i, j) iff |theta_ij| > threshold.

    The diagonal is ignored and the output is symmetrized, so a stray
    asymmetric entry can only add an edge, never produce an asymmetric graph.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise DimensionMismatch(f"precision must be square, got {theta.shape}")
    if threshold < 0:
        raise InvalidParameter(f"threshold must be >= 0, got {threshold}")
    mask = np.abs(theta) > threshold
    mask |= mask.T
    np.fill_diagonal(mask, False)
    rows, cols = np.nonzero(np.triu(mask, k=1))
    return FeatureGraph(theta.shape[0], zip(rows, cols))
