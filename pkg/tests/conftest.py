import os

import numpy as np
import pytest

from cptdual.core.market import ScenarioTree
from cptdual.util.rng import make_rng

_MY_DIR = os.path.realpath(os.path.dirname(__file__))


def random_tree(seed: int, d: int = 1, horizon: int = 2) -> ScenarioTree:
    """
    Seeded arbitrage-free tree: with one asset every node has one up and one
    down move, with two assets three moves spanning the plane.
    """
    rng = make_rng(seed, "tests", "tree")
    parent, probs, prices = [-1], [1.0], [np.full(d, 100.0)]
    frontier = [0]
    for _ in range(horizon):
        nxt = []
        for node in frontier:
            if d == 1:
                moves = np.array([[rng.uniform(0.1, 3.0)], [-rng.uniform(0.1, 3.0)]])
                if rng.uniform() < 0.5:
                    moves = np.vstack([moves, [[rng.uniform(-3.0, 3.0)]]])
            else:
                turn = rng.uniform(0.0, 2.0 * np.pi)
                angles = turn + 2.0 * np.pi * np.arange(3) / 3.0
                radius = rng.uniform(0.2, 2.0, 3)[:, None]
                moves = radius * np.column_stack([np.cos(angles), np.sin(angles)])
            weights = rng.dirichlet(np.ones(moves.shape[0]))
            weights = np.maximum(weights, 0.02)
            weights /= weights.sum()
            for move, p in zip(moves, weights):
                parent.append(node)
                probs.append(float(p))
                prices.append(prices[node] + move)
                nxt.append(len(parent) - 1)
        frontier = nxt
    benchmark = {leaf: float(rng.uniform(-1.0, 1.0)) for leaf in frontier}
    return ScenarioTree(parent, _renormalized(parent, probs), np.array(prices), benchmark)


def _renormalized(parent, probs):
    # float Dirichlet weights can miss 1 by a few ulps
    probs = list(probs)
    parent = np.asarray(parent)
    for node in np.unique(parent[1:]):
        kids = np.flatnonzero(parent == node)
        total = sum(probs[k] for k in kids)
        for k in kids:
            probs[k] = probs[k] / total
        probs[kids[-1]] = 1.0 - sum(probs[k] for k in kids[:-1])
    return probs


@pytest.fixture(scope="session")
def test_data_path():
    return os.path.join(_MY_DIR, "testdata")


@pytest.fixture
def binomial_tree():
    """``+2`` with probability 3/5, ``-1`` with probability 2/5."""
    return ScenarioTree.one_step([2.0, -1.0], ["3/5", "2/5"], s0=[0.0])


@pytest.fixture
def symmetric_tree():
    return ScenarioTree.one_step([1.0, -1.0], ["1/2", "1/2"], s0=[0.0])


@pytest.fixture
def two_period_tree():
    return ScenarioTree.iid([2.0, -1.0], ["3/5", "2/5"], horizon=2, s0=[10.0])


@pytest.fixture
def arbitrage_tree():
    return ScenarioTree.one_step([1.0, 2.0], ["1/2", "1/2"], s0=[0.0])


@pytest.fixture(scope="session")
def tree_factory():
    return random_tree
