"""
Finite scenario-tree markets: filtration, prices, predictable strategies and
wealth processes.

The sample space is the set of leaves.  Node ``0`` is the root, every other
node stores the branch probability from its parent and its price vector, and
``parent[i] < i`` for every non-root node, so iterating nodes in id order
visits parents first.
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from numbers import Rational
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from cptdual.core.distribution import PROBABILITY_TOLERANCE, DiscreteDistribution
from cptdual.core.errors import ConfigurationError, TreeValidationError

logger = logging.getLogger(__name__)

Probability = Union[float, Fraction]


def _parse_probability(value) -> Probability:
    if isinstance(value, bool):
        raise TreeValidationError(f"Invalid branch probability {value!r}")
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise TreeValidationError(f"Invalid branch probability {value!r}") from e
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise TreeValidationError(f"Invalid branch probability {value!r}") from e


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class ScenarioTree:
    """
    A finite filtered market with ``d`` risky assets over ``T`` periods.

    Parameters
    ----------
    parent : sequence of int
        Parent id of every node, ``-1`` for the root (node 0).  Parents must
        precede their children.
    cond_prob : sequence
        Branch probability of every node given its parent (ignored for the
        root).  ``Fraction`` values (or ints / ``"a/b"`` strings) are kept
        exact and their sibling sums are checked exactly.
    prices : array-like, shape (n_nodes, d)
        Discounted price vector at every node.
    benchmark : mapping or array-like, optional
        Benchmark ``B`` per terminal node, either a full per-node array
        (values at internal nodes ignored) or a ``{node_id: B}`` mapping.
        Defaults to zero.
    """

    def __init__(self, parent: Sequence[int], cond_prob: Sequence, prices, benchmark=None):
        parent = np.asarray(parent, dtype=int)
        n = parent.size
        if n < 2:
            raise TreeValidationError("A scenario tree needs a root and at least one child")
        if parent[0] != -1:
            raise TreeValidationError("Node 0 must be the root (parent -1)")
        if np.any(parent[1:] < 0) or np.any(parent[1:] >= np.arange(1, n)):
            raise TreeValidationError("Every non-root node must have a parent with a smaller id")
        if len(cond_prob) != n:
            raise TreeValidationError(f"Expected {n} branch probabilities, got {len(cond_prob)}")

        prices = np.asarray(prices, dtype=float)
        if prices.ndim == 1:
            prices = prices[:, None]
        if prices.ndim != 2 or prices.shape[0] != n or prices.shape[1] < 1:
            raise TreeValidationError(f"Prices must have shape ({n}, d), got {prices.shape}")
        if not np.all(np.isfinite(prices)):
            raise TreeValidationError("Prices must be finite")

        depth = np.zeros(n, dtype=int)
        for i in range(1, n):
            depth[i] = depth[parent[i]] + 1
        children: List[List[int]] = [[] for _ in range(n)]
        for i in range(1, n):
            children[parent[i]].append(i)

        horizon = int(depth.max())
        leaves = np.array([i for i in range(n) if not children[i]], dtype=int)
        shallow = leaves[depth[leaves] != horizon]
        if shallow.size:
            raise TreeValidationError(f"Terminal node {int(shallow[0])} sits at depth {int(depth[shallow[0]])}, expected {horizon}")

        probs = [None] + [_parse_probability(p) for p in list(cond_prob)[1:]]
        self._validate_probabilities(probs, children)
        self.exact = all(isinstance(p, Fraction) for p in probs[1:])
        self.cond_prob_exact: Optional[List[Fraction]] = [Fraction(1)] + probs[1:] if self.exact else None

        cond = np.ones(n)
        cond[1:] = [float(p) for p in probs[1:]]
        path_prob = np.ones(n)
        if self.exact:
            exact_path = [Fraction(1)] * n
            for i in range(1, n):
                exact_path[i] = exact_path[parent[i]] * probs[i]
            path_prob = np.array([float(p) for p in exact_path])
        else:
            for i in range(1, n):
                path_prob[i] = path_prob[parent[i]] * cond[i]

        increments = np.zeros_like(prices)
        increments[1:] = prices[1:] - prices[parent[1:]]

        internal = np.array([i for i in range(n) if children[i]], dtype=int)
        internal_index = np.full(n, -1, dtype=int)
        internal_index[internal] = np.arange(internal.size)
        leaf_index = np.full(n, -1, dtype=int)
        leaf_index[leaves] = np.arange(leaves.size)

        leaf_benchmark = np.zeros(leaves.size)
        if benchmark is not None:
            if isinstance(benchmark, dict):
                for node, value in benchmark.items():
                    node = int(node)
                    if leaf_index[node] < 0:
                        raise TreeValidationError(f"Benchmark given for non-terminal node {node}")
                    leaf_benchmark[leaf_index[node]] = float(value)
            else:
                benchmark = np.asarray(benchmark, dtype=float)
                if benchmark.shape == (n,):
                    leaf_benchmark = benchmark[leaves].copy()
                elif benchmark.shape == (leaves.size,):
                    leaf_benchmark = benchmark.copy()
                else:
                    raise TreeValidationError(f"Benchmark must have {n} or {leaves.size} entries, got {benchmark.shape}")
        if not np.all(np.isfinite(leaf_benchmark)):
            raise TreeValidationError("Benchmark values must be finite")

        paths = np.zeros((leaves.size, horizon + 1), dtype=int)
        paths[:, horizon] = leaves
        for t in range(horizon, 0, -1):
            paths[:, t - 1] = parent[paths[:, t]]

        self.T = horizon
        self.d = prices.shape[1]
        self.n_nodes = n
        self.parent = _readonly(parent)
        self.depth = _readonly(depth)
        self.prices = _readonly(prices)
        self.increments = _readonly(increments)
        self.cond_prob = _readonly(cond)
        self.path_prob = _readonly(path_prob)
        self.children = [_readonly(np.array(c, dtype=int)) for c in children]
        self.internal = _readonly(internal)
        self.internal_index = _readonly(internal_index)
        self.leaves = _readonly(leaves)
        self.leaf_index = _readonly(leaf_index)
        self.leaf_prob = _readonly(path_prob[leaves].copy())
        self.benchmark = _readonly(leaf_benchmark)
        self.paths = _readonly(paths)

    @staticmethod
    def _validate_probabilities(probs, children):
        for node, kids in enumerate(children):
            if not kids:
                continue
            branch = [probs[k] for k in kids]
            for k, p in zip(kids, branch):
                if not (0 < p <= 1):
                    raise TreeValidationError(f"Branch probability of node {k} is {p}, expected a value in (0, 1]")
            if all(isinstance(p, Fraction) for p in branch):
                if sum(branch) != 1:
                    raise TreeValidationError(f"Branch probabilities under node {node} sum to {sum(branch)}, not exactly 1")
            else:
                total = float(sum(float(p) for p in branch))
                if abs(total - 1.0) > PROBABILITY_TOLERANCE:
                    raise TreeValidationError(f"Branch probabilities under node {node} sum to {total!r}, not 1")

    @property
    def n_internal(self) -> int:
        return self.internal.size

    @property
    def n_leaves(self) -> int:
        return self.leaves.size

    @property
    def strategy_dim(self) -> int:
        """Number of scalar holdings in a strategy (``d`` per information node)."""
        return self.n_internal * self.d

    def __repr__(self):
        return f"ScenarioTree(T={self.T}, d={self.d}, nodes={self.n_nodes}, leaves={self.n_leaves})"

    def nodes_at_depth(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.depth == t)

    @cached_property
    def design_matrix(self) -> np.ndarray:
        """
        Linear map from a stacked strategy vector to terminal gains.

        Row ``i`` holds, in the block of every ancestor information node, the
        price increment of the edge the ``i``-th leaf path takes out of it, so
        ``X_T = z + design_matrix @ theta.to_vector()`` leaf-wise.
        """
        A = np.zeros((self.n_leaves, self.strategy_dim))
        rows = np.arange(self.n_leaves)
        for t in range(1, self.T + 1):
            child = self.paths[:, t]
            block = self.internal_index[self.parent[child]]
            for j in range(self.d):
                A[rows, block * self.d + j] = self.increments[child, j]
        return _readonly(A)

    def node_sums(self, leaf_values) -> np.ndarray:
        """Sum ``leaf_values`` over the leaves below every node."""
        leaf_values = np.asarray(leaf_values, dtype=float)
        sums = np.zeros(self.n_nodes)
        for t in range(self.T + 1):
            np.add.at(sums, self.paths[:, t], leaf_values)
        return sums

    def along_paths(self, node_values) -> np.ndarray:
        """Values of a per-node quantity along every leaf path, shape ``(n_leaves, T + 1)``."""
        return np.asarray(node_values)[self.paths]

    # Construction helpers

    @classmethod
    def from_dict(cls, root: Dict) -> "ScenarioTree":
        """
        Build a tree from the nested JSON layout::

            {"S": [100.0], "children": [
                {"p": 0.6, "S": [102.0], "B": 0.0},
                {"p": "2/5", "S": [99.0], "B": 0.0}]}

        Terminal nodes may carry ``B`` (default 0).  ``p`` may be a number or
        an ``"a/b"`` string for an exact rational.
        """
        if not isinstance(root, dict):
            raise TreeValidationError("A tree document must be a JSON object")
        parent, probs, prices, bench = [-1], [1], [root.get("S")], {}
        queue = [(0, root)]
        while queue:
            node_id, node = queue.pop(0)
            kids = node.get("children") or []
            if not kids and node_id != 0:
                bench[node_id] = node.get("B", 0.0)
            for child in kids:
                if not isinstance(child, dict):
                    raise TreeValidationError("Tree children must be JSON objects")
                if "p" not in child or "S" not in child:
                    raise TreeValidationError("Every non-root node needs 'p' and 'S'")
                parent.append(node_id)
                probs.append(child["p"])
                prices.append(child["S"])
                queue.append((len(parent) - 1, child))
        if any(s is None for s in prices):
            raise TreeValidationError("Every node needs a price vector 'S'")
        try:
            price_array = np.array([np.atleast_1d(np.asarray(s, dtype=float)) for s in prices])
        except ValueError as e:
            raise TreeValidationError("Price vectors must all have the same dimension") from e
        return cls(parent, probs, price_array, bench)

    def to_dict(self) -> Dict:
        def node_doc(i: int) -> Dict:
            doc = {"S": self.prices[i].tolist()}
            if i != 0:
                doc["p"] = str(self.cond_prob_exact[i]) if self.exact else float(self.cond_prob[i])
            if self.children[i].size:
                doc["children"] = [node_doc(int(c)) for c in self.children[i]]
            else:
                doc["B"] = float(self.benchmark[self.leaf_index[i]])
            return doc

        return node_doc(0)

    @classmethod
    def one_step(cls, increments, probs, s0=None, benchmark=0.0) -> "ScenarioTree":
        """Single-period market whose children move prices by ``increments``."""
        increments = np.asarray(increments, dtype=float)
        if increments.ndim == 1:
            increments = increments[:, None]
        return cls.iid(increments, probs, horizon=1, s0=s0, benchmark=benchmark)

    @classmethod
    def iid(cls, increments, probs, horizon: int, s0=None, benchmark=0.0) -> "ScenarioTree":
        """
        Non-recombining tree where every node branches with the same
        increments and probabilities for ``horizon`` periods.
        """
        if horizon < 1:
            raise TreeValidationError("Horizon must be at least 1")
        increments = np.asarray(increments, dtype=float)
        if increments.ndim == 1:
            increments = increments[:, None]
        probs = list(probs)
        if len(probs) != increments.shape[0]:
            raise TreeValidationError("Need one probability per branch")
        s0 = np.zeros(increments.shape[1]) if s0 is None else np.atleast_1d(np.asarray(s0, dtype=float))
        parent, cond, prices = [-1], [1], [s0]
        frontier = [0]
        for _ in range(horizon):
            nxt = []
            for node in frontier:
                for k, p in enumerate(probs):
                    parent.append(node)
                    cond.append(p)
                    prices.append(prices[node] + increments[k])
                    nxt.append(len(parent) - 1)
            frontier = nxt
        n = len(parent)
        bench = np.zeros(n)
        bench[frontier] = benchmark
        return cls(parent, cond, np.array(prices), bench)


@dataclass
class Strategy:
    """
    Predictable holdings: one vector in R^d per information (non-terminal)
    node, rows ordered like ``tree.internal``.
    """

    values: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float, ndmin=2)

    @classmethod
    def zeros(cls, tree: ScenarioTree) -> "Strategy":
        return cls(np.zeros((tree.n_internal, tree.d)))

    @classmethod
    def from_vector(cls, tree: ScenarioTree, vector) -> "Strategy":
        vector = np.asarray(vector, dtype=float).ravel()
        if vector.size != tree.strategy_dim:
            raise ConfigurationError(f"Strategy vector has {vector.size} entries, tree needs {tree.strategy_dim}")
        return cls(vector.reshape(tree.n_internal, tree.d))

    @classmethod
    def from_nested(cls, tree: ScenarioTree, data) -> "Strategy":
        """
        Accepts a flat list, a list of per-node vectors, or a mapping
        ``{node_id: vector}`` (missing nodes hold nothing).
        """
        if isinstance(data, dict):
            values = np.zeros((tree.n_internal, tree.d))
            for node, vector in data.items():
                node = int(node)
                if not (0 <= node < tree.n_nodes) or tree.internal_index[node] < 0:
                    raise ConfigurationError(f"Node {node} is not an information node")
                vector = np.atleast_1d(np.asarray(vector, dtype=float))
                if vector.shape != (tree.d,):
                    raise ConfigurationError(f"Holding at node {node} has dimension {vector.size}, expected {tree.d}")
                values[tree.internal_index[node]] = vector
            return cls(values)
        return cls.from_vector(tree, np.asarray(data, dtype=float))

    @classmethod
    def unit(cls, tree: ScenarioTree, asset: int, sign: float = 1.0, node: int = 0) -> "Strategy":
        """Hold ``sign`` units of one asset at a single information node."""
        strategy = cls.zeros(tree)
        strategy.values[tree.internal_index[node], asset] = sign
        return strategy

    def to_vector(self) -> np.ndarray:
        return self.values.ravel().copy()

    def check(self, tree: ScenarioTree):
        if self.values.shape != (tree.n_internal, tree.d):
            raise ConfigurationError(f"Strategy has shape {self.values.shape}, tree needs ({tree.n_internal}, {tree.d})")

    def at(self, tree: ScenarioTree, node: int) -> np.ndarray:
        return self.values[tree.internal_index[node]]

    def block_norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def __add__(self, other: "Strategy") -> "Strategy":
        return Strategy(self.values + other.values)

    def __sub__(self, other: "Strategy") -> "Strategy":
        return Strategy(self.values - other.values)

    def __mul__(self, scalar: float) -> "Strategy":
        return Strategy(self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Strategy":
        return Strategy(-self.values)


@dataclass
class WealthProcess:
    """Wealth ``X_t^z(theta)`` at every node of a tree."""

    z: float
    values: np.ndarray
    tree: ScenarioTree

    def at_depth(self, t: int) -> np.ndarray:
        return self.values[self.tree.nodes_at_depth(t)]

    def terminal(self) -> np.ndarray:
        """Terminal wealth in leaf order."""
        return self.values[self.tree.leaves]

    def paths(self) -> np.ndarray:
        """Wealth along every leaf path, shape ``(n_leaves, T + 1)``."""
        return self.tree.along_paths(self.values)

    def gains(self) -> np.ndarray:
        """Per-period gains ``theta_t . dS_t`` along every leaf path, shape ``(n_leaves, T)``."""
        return np.diff(self.paths(), axis=1)


def _as_strategy(tree: ScenarioTree, theta) -> Strategy:
    if not isinstance(theta, Strategy):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 1:
            return Strategy.from_vector(tree, theta)
        theta = Strategy(theta)
    theta.check(tree)
    return theta


def wealth(tree: ScenarioTree, z: float, theta) -> WealthProcess:
    """
    Wealth process of initial capital ``z`` traded with ``theta``.

    Along every edge ``X_child = X_parent + theta(parent) . dS_child``.

    Raises
    ------
    ConfigurationError
        When ``theta`` does not have one ``d``-vector per information node.
    """
    theta = _as_strategy(tree, theta)
    z = float(z)
    values = np.empty(tree.n_nodes)
    values[0] = z
    for t in range(1, tree.T + 1):
        nodes = tree.nodes_at_depth(t)
        parents = tree.parent[nodes]
        holdings = theta.values[tree.internal_index[parents]]
        values[nodes] = values[parents] + np.einsum("ij,ij->i", holdings, tree.increments[nodes])
    return WealthProcess(z=z, values=values, tree=tree)


def terminal_distribution(tree: ScenarioTree, z: float, theta) -> DiscreteDistribution:
    """Law of ``X_T^z(theta) - B`` over the terminal atoms."""
    process = wealth(tree, z, theta)
    return DiscreteDistribution(process.terminal() - tree.benchmark, tree.leaf_prob)
