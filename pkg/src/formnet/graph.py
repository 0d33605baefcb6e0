"""Formation graphs: incidence and rigidity matrices, rank-based rigidity, connectivity.

Agents are 0-based internally. Edges are ordered ``(tail, head)`` pairs; the
orientation only matters for measurement signs (``z = x_tail - x_head``).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

RANK_TOL = 1e-9


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    separation: float
    # None means "use the current inter-agent distance", refreshed every epoch.
    weight: float | None = None

    @property
    def key(self) -> frozenset:
        return frozenset((self.tail, self.head))


@dataclass(frozen=True)
class FormationGraph:
    n: int
    d: int
    edges: tuple[Edge, ...]
    leader: int = 0

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        if self.n < 1:
            raise GraphError(f"agent count must be positive, got {self.n}")
        if self.d not in (2, 3):
            raise GraphError(f"dimension must be 2 or 3, got {self.d}")
        if not 0 <= self.leader < self.n:
            raise GraphError(f"leader {self.leader} out of range for {self.n} agents")
        seen = set()
        for k, e in enumerate(self.edges):
            if not (0 <= e.tail < self.n and 0 <= e.head < self.n):
                raise GraphError(f"edge {k} ({e.tail}, {e.head}) references a missing agent")
            if e.tail == e.head:
                raise GraphError(f"edge {k} is a self-loop on agent {e.tail}")
            if e.key in seen:
                raise GraphError(f"duplicate edge {{{e.tail}, {e.head}}}")
            seen.add(e.key)
            if not e.separation > 0:
                raise GraphError(f"edge {k} separation must be > 0, got {e.separation}")
            if e.weight is not None and not e.weight >= 0:
                raise GraphError(f"edge {k} weight must be >= 0, got {e.weight}")

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(e.tail, e.head) for e in self.edges]

    def edge_index(self, i: int, j: int) -> int:
        """Index of the undirected edge {i, j}; KeyError if absent."""
        key = frozenset((i, j))
        for k, e in enumerate(self.edges):
            if e.key == key:
                return k
        raise KeyError(f"no edge between agents {i} and {j}")

    @classmethod
    def from_offsets(cls, offsets, pairs, leader=0, weights=None) -> "FormationGraph":
        """Build a graph whose separations are realized by the desired offsets."""
        offsets = np.asarray(offsets, dtype=float)
        n, d = offsets.shape
        weights = weights if weights is not None else [None] * len(pairs)
        edges = [
            Edge(i, j, float(np.linalg.norm(offsets[i] - offsets[j])), w)
            for (i, j), w in zip(pairs, weights)
        ]
        return cls(n=n, d=d, edges=tuple(edges), leader=leader)


@dataclass(frozen=True)
class Configuration:
    """Agent positions at one epoch, shape ``(n, d)``."""

    positions: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2:
            raise GraphError(f"positions must be an (n, d) array, got shape {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise GraphError("positions contain non-finite coordinates")
        if self.epoch < 0:
            raise GraphError("epoch must be nonnegative")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def q(self) -> np.ndarray:
        return self.positions.reshape(-1)


def _check_config(graph: FormationGraph, config: Configuration):
    if (config.n, config.d) != (graph.n, graph.d):
        raise GraphError(
            f"configuration is {config.n}x{config.d} but graph has n={graph.n}, d={graph.d}"
        )


def incidence_from_pairs(pairs: Sequence[tuple[int, int]], n: int) -> np.ndarray:
    """Signed incidence matrix, +1 at the tail and -1 at the head of each row.

    Repeated pairs are allowed here (repeated measurements of one link).
    """
    H = np.zeros((len(pairs), n))
    for k, (i, j) in enumerate(pairs):
        H[k, i] = 1.0
        H[k, j] = -1.0
    return H


def build_incidence(graph: FormationGraph, edges: Iterable[int] | None = None) -> np.ndarray:
    idx = range(graph.m) if edges is None else edges
    return incidence_from_pairs([graph.pairs[k] for k in idx], graph.n)


def build_rigidity_matrix(graph: FormationGraph, config: Configuration) -> np.ndarray:
    _check_config(graph, config)
    x = config.positions
    d = graph.d
    R = np.zeros((graph.m, graph.n * d))
    for k, e in enumerate(graph.edges):
        diff = x[e.tail] - x[e.head]
        R[k, e.tail * d:(e.tail + 1) * d] = diff
        R[k, e.head * d:(e.head + 1) * d] = -diff
    return R


def numerical_rank(A: np.ndarray, tol: float = RANK_TOL) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def required_rank(n: int, d: int) -> int:
    if d == 2:
        if n < 2:
            raise GraphError("rigidity rank test needs at least 2 agents in the plane")
        return 2 * n - 3
    if d == 3:
        if n < 3:
            raise GraphError("rigidity rank test needs at least 3 agents in space")
        return 3 * n - 6
    raise GraphError(f"no rigidity rank formula for dimension {d}")


@dataclass(frozen=True)
class RigidityReport:
    rigid: bool
    rank: int
    required: int
    degenerate_placement: bool = False
    perturbed_rank: int | None = field(default=None, compare=False)


def is_generically_rigid(
    graph: FormationGraph,
    config: Configuration,
    tol: float = RANK_TOL,
    seed: int = 0,
) -> RigidityReport:
    """Rank test of the rigidity matrix at ``config``.

    The rank is also evaluated at one seeded random perturbation of the
    placement; if the two verdicts disagree the placement is flagged as
    degenerate (collinear/coplanar points under-report the generic rank).
    """
    required = required_rank(graph.n, graph.d)
    rank = numerical_rank(build_rigidity_matrix(graph, config), tol)

    x = config.positions
    scale = max(float(np.ptp(x)), 1.0)
    rng = np.random.default_rng(seed)
    jiggled = Configuration(x + 1e-3 * scale * rng.standard_normal(x.shape), config.epoch)
    perturbed = numerical_rank(build_rigidity_matrix(graph, jiggled), tol)

    rigid = rank == required
    return RigidityReport(
        rigid=rigid,
        rank=rank,
        required=required,
        degenerate_placement=rigid != (perturbed == required),
        perturbed_rank=perturbed,
    )


def weighted_laplacian(graph: FormationGraph, noise_cov, edges: Iterable[int] | None = None) -> np.ndarray:
    """``H^T P^-1 H`` for scalar per-edge noise covariance ``P`` (m x m, SPD)."""
    H = build_incidence(graph, edges)
    P = np.atleast_2d(np.asarray(noise_cov, dtype=float))
    if P.shape != (H.shape[0], H.shape[0]):
        raise GraphError(f"noise covariance must be {H.shape[0]}x{H.shape[0]}, got {P.shape}")
    if not np.allclose(P, P.T, atol=1e-12, rtol=0):
        raise GraphError("noise covariance is not symmetric")
    try:
        factor = scipy.linalg.cho_factor(P)
    except np.linalg.LinAlgError as exc:
        raise GraphError("noise covariance is not positive definite") from exc
    L = H.T @ scipy.linalg.cho_solve(factor, H)
    return 0.5 * (L + L.T)


def components(n: int, pairs: Iterable[tuple[int, int]]) -> list[tuple[int, ...]]:
    """Connected components by BFS, each sorted, ordered by smallest member."""
    adj = [[] for _ in range(n)]
    for i, j in pairs:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * n
    out = []
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        comp = [start]
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    comp.append(v)
                    queue.append(v)
        out.append(tuple(sorted(comp)))
    return out


def is_connected(graph: FormationGraph, active_edges: Iterable[int] | None = None) -> bool:
    idx = range(graph.m) if active_edges is None else list(active_edges)
    for k in idx:
        if not 0 <= k < graph.m:
            raise GraphError(f"edge index {k} out of range")
    return len(components(graph.n, [graph.pairs[k] for k in idx])) == 1


def distances(graph: FormationGraph, positions) -> np.ndarray:
    x = np.asarray(positions, dtype=float)
    return np.array([np.linalg.norm(x[e.tail] - x[e.head]) for e in graph.edges])
