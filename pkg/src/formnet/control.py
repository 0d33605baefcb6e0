"""Consensus formation control on relative errors, with explicit Euler steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Configuration, FormationGraph


@dataclass(frozen=True)
class DesiredFormation:
    offsets: np.ndarray  # (n, d)

    def __post_init__(self):
        off = np.array(self.offsets, dtype=float)
        if off.ndim != 2 or not np.all(np.isfinite(off)):
            raise ValueError("offsets must be a finite (n, d) array")
        off.setflags(write=False)
        object.__setattr__(self, "offsets", off)

    def separation(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.offsets[i] - self.offsets[j]))

    def check_against(self, graph: FormationGraph, atol: float = 1e-9):
        """Raise if the offsets do not realize the graph's separations."""
        if self.offsets.shape != (graph.n, graph.d):
            raise ValueError(f"offsets have shape {self.offsets.shape}, graph wants ({graph.n}, {graph.d})")
        for e in graph.edges:
            got = self.separation(e.tail, e.head)
            if abs(got - e.separation) > atol:
                raise ValueError(
                    f"offsets give |d0_{e.tail + 1} - d0_{e.head + 1}| = {got}, expected {e.separation}"
                )


def _positions(config):
    return config.positions if isinstance(config, Configuration) else np.asarray(config, dtype=float)


def relative_error(config, formation: DesiredFormation) -> np.ndarray:
    x = _positions(config)
    if x.shape != formation.offsets.shape:
        raise ValueError(f"positions {x.shape} do not match offsets {formation.offsets.shape}")
    return x - formation.offsets


def neighbor_sets(n: int, pairs) -> list[list[int]]:
    """Symmetric neighbor lists from undirected pairs."""
    nbrs = [[] for _ in range(n)]
    for i, j in pairs:
        nbrs[i].append(j)
        nbrs[j].append(i)
    return nbrs


def control_velocity(config, formation: DesiredFormation, neighbors) -> np.ndarray:
    """``v_i = -sum_j [(x_i - x_j) - (d0_i - d0_j)]`` over each agent's active neighbors.

    Agents with no neighbors get zero velocity.
    """
    r = relative_error(config, formation)
    n = r.shape[0]
    if len(neighbors) != n:
        raise ValueError(f"need {n} neighbor lists, got {len(neighbors)}")
    v = np.zeros_like(r)
    for i, nbrs in enumerate(neighbors):
        for j in nbrs:
            if not 0 <= j < n:
                raise IndexError(f"neighbor {j} of agent {i} out of range")
            v[i] -= r[i] - r[j]
    return v


def integrate_step(config: Configuration, velocities, h: float) -> Configuration:
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    return Configuration(config.positions + h * np.asarray(velocities, dtype=float), config.epoch + 1)


def formation_error(config, graph: FormationGraph) -> float:
    """Sum over edges of the absolute separation violation."""
    x = _positions(config)
    return float(sum(abs(np.linalg.norm(x[e.tail] - x[e.head]) - e.separation) for e in graph.edges))
