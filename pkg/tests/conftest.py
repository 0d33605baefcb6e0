import itertools

import numpy as np
import pytest

from formnet.control import DesiredFormation
from formnet.graph import Edge, FormationGraph
from formnet.loss import LossModel
from formnet.sim import Scenario

PENTAGON_OFFSETS = [[0.0, 0.0], [1.0, -0.9], [2.2, 0.1], [1.5, 1.6], [0.2, 1.3]]
PENTAGON_START = [[0.3, -0.2], [1.4, -1.3], [2.0, 0.6], [1.1, 2.1], [-0.3, 1.0]]
# outer cycle plus diagonals 1-3 and 3-5: three triangles, minimally rigid
PENTAGON_PAIRS = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2), (2, 4)]


def graph_from_pairs(n, pairs, d=2, weights=None, leader=0):
    weights = weights or [None] * len(pairs)
    return FormationGraph(n, d, tuple(Edge(i, j, 1.0, w) for (i, j), w in zip(pairs, weights)), leader)


def random_pairs(rng, n, connected=True, p=0.5):
    """Random simple graph; a random spanning tree is added first when ``connected``."""
    pairs = set()
    if connected:
        order = rng.permutation(n)
        for k in range(1, n):
            a, b = int(order[k]), int(order[rng.integers(k)])
            pairs.add((min(a, b), max(a, b)))
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < p:
            pairs.add((i, j))
    pairs = sorted(pairs)
    # random orientation
    return [(i, j) if rng.random() < 0.5 else (j, i) for i, j in pairs]


def pentagon_scenario(**kw):
    off = np.array(PENTAGON_OFFSETS)
    graph = FormationGraph.from_offsets(off, PENTAGON_PAIRS, leader=0)
    base = dict(
        graph=graph,
        formation=DesiredFormation(off),
        initial_positions=np.array(PENTAGON_START),
        epochs=50,
    )
    base.update(kw)
    return Scenario(**base)


def one_link_loss(edge=(0, 1)):
    return LossModel("persistent", failed=frozenset({PENTAGON_PAIRS.index(edge)}))


@pytest.fixture
def pentagon():
    return pentagon_scenario()
