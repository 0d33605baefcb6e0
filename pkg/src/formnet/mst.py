"""Token-based link pruning and minimum spanning trees over the healthy links."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .graph import FormationGraph, components, distances


class Disconnected(Exception):
    """The healthy links do not span every agent."""

    def __init__(self, components):
        self.components = [tuple(c) for c in components]
        super().__init__(
            "healthy links leave the formation split into "
            + " | ".join("{" + ",".join(str(i + 1) for i in c) + "}" for c in self.components)
        )


@dataclass(frozen=True)
class LinkTokenVector:
    tokens: tuple[bool, ...]
    epoch: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(bool(t) for t in self.tokens))

    def __len__(self):
        return len(self.tokens)

    def bitstring(self) -> str:
        return "".join("1" if t else "0" for t in self.tokens)

    @classmethod
    def from_bitstring(cls, bits: str, epoch: int = 0) -> "LinkTokenVector":
        if set(bits) - {"0", "1"}:
            raise ValueError(f"token bitstring may only contain 0 and 1, got {bits!r}")
        return cls(tuple(b == "1" for b in bits), epoch)


@dataclass(frozen=True)
class HealthySubgraph:
    edges: tuple[int, ...]

    @property
    def healthy_count(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class SpanningTree:
    edges: tuple[int, ...]
    total_weight: float


class UnionFind:
    """Disjoint sets with path halving and union by size."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x):
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if self.size[rx] < self.size[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        self.size[rx] += self.size[ry]
        return True


def prune_unhealthy(graph: FormationGraph, tokens: LinkTokenVector | Sequence[bool]) -> HealthySubgraph:
    bits = tokens.tokens if isinstance(tokens, LinkTokenVector) else tuple(tokens)
    if len(bits) != graph.m:
        raise ValueError(f"expected {graph.m} tokens, got {len(bits)}")
    return HealthySubgraph(tuple(k for k, ok in enumerate(bits) if ok))


def edge_weights(graph: FormationGraph, positions=None) -> list:
    """Static weights where given, otherwise the current inter-agent distance."""
    dist = None
    out = []
    for k, e in enumerate(graph.edges):
        if e.weight is not None:
            out.append(e.weight)
            continue
        if positions is None:
            raise ValueError(f"edge {k} has no static weight and no positions were given")
        if dist is None:
            dist = distances(graph, positions)
        out.append(float(dist[k]))
    return out


def spanning_forest(graph: FormationGraph, healthy: HealthySubgraph, weights=None):
    """Kruskal over the healthy edges.

    Returns ``(tree_edges, total_weight, components)``; a single component
    means the forest is a spanning tree. Ties are broken by edge index.
    """
    w = edge_weights(graph) if weights is None else list(weights)
    if len(w) != graph.m:
        raise ValueError(f"expected {graph.m} weights, got {len(w)}")
    order = sorted(healthy.edges, key=lambda k: (w[k], k))
    uf = UnionFind(graph.n)
    tree = []
    total = 0
    for k in order:
        e = graph.edges[k]
        if uf.union(e.tail, e.head):
            tree.append(k)
            total = total + w[k]
            if len(tree) == graph.n - 1:
                break
    comps = components(graph.n, [graph.pairs[k] for k in tree])
    return tuple(tree), total, comps


def build_mst(graph: FormationGraph, healthy: HealthySubgraph, weights=None) -> SpanningTree:
    tree, total, comps = spanning_forest(graph, healthy, weights)
    if len(comps) > 1:
        raise Disconnected(comps)
    return SpanningTree(tree, total)
