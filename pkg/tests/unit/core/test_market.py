from fractions import Fraction

import numpy as np
import pytest

from cptdual.core.errors import ConfigurationError, TreeValidationError
from cptdual.core.market import ScenarioTree, Strategy, terminal_distribution, wealth


def test_binomial_tree_layout(binomial_tree):
    assert binomial_tree.T == 1
    assert binomial_tree.d == 1
    assert binomial_tree.exact
    assert binomial_tree.leaves.tolist() == [1, 2]
    assert binomial_tree.leaf_prob == pytest.approx([0.6, 0.4])
    assert binomial_tree.cond_prob_exact[1] == Fraction(3, 5)
    assert binomial_tree.increments[1:, 0].tolist() == [2.0, -1.0]


def test_iid_tree_paths(two_period_tree):
    tree = two_period_tree
    assert tree.n_nodes == 7
    assert tree.n_leaves == 4
    assert tree.internal.tolist() == [0, 1, 2]
    assert tree.paths[:, 0].tolist() == [0, 0, 0, 0]
    assert tree.prices[tree.leaves, 0].tolist() == [14.0, 11.0, 11.0, 8.0]
    assert tree.leaf_prob.sum() == pytest.approx(1.0, abs=1e-15)
    assert tree.nodes_at_depth(1).tolist() == [1, 2]


def test_exact_probabilities_must_sum_to_one():
    with pytest.raises(TreeValidationError, match="not exactly 1"):
        ScenarioTree([-1, 0, 0], [1, "1/2", "1/3"], [0.0, 1.0, -1.0])


def test_float_probabilities_use_tolerance():
    with pytest.raises(TreeValidationError):
        ScenarioTree([-1, 0, 0], [1, 0.5, 0.49], [0.0, 1.0, -1.0])
    tree = ScenarioTree([-1, 0, 0], [1, 0.3, 0.7], [0.0, 1.0, -1.0])
    assert not tree.exact


def test_structural_errors():
    with pytest.raises(TreeValidationError, match="root"):
        ScenarioTree([0, 0], [1, 1], [0.0, 1.0])
    with pytest.raises(TreeValidationError, match="smaller id"):
        ScenarioTree([-1, 2, 0], [1, 1, 1], [0.0, 1.0, 2.0])
    # node 2 is a leaf at depth 1 while node 3 sits at depth 2
    with pytest.raises(TreeValidationError, match="depth"):
        ScenarioTree([-1, 0, 0, 1], [1, "1/2", "1/2", 1], [0.0, 1.0, -1.0, 2.0])
    with pytest.raises(TreeValidationError, match="probability"):
        ScenarioTree([-1, 0, 0], [1, 0.0, 1.0], [0.0, 1.0, -1.0])
    with pytest.raises(TreeValidationError, match="finite"):
        ScenarioTree([-1, 0], [1, 1], [0.0, np.nan])


def test_benchmark_forms(binomial_tree):
    by_node = ScenarioTree([-1, 0, 0], [1, "3/5", "2/5"], [0.0, 2.0, -1.0], {2: 0.5})
    assert by_node.benchmark.tolist() == [0.0, 0.5]
    per_node = ScenarioTree([-1, 0, 0], [1, "3/5", "2/5"], [0.0, 2.0, -1.0], [9.0, 1.0, 2.0])
    assert per_node.benchmark.tolist() == [1.0, 2.0]
    with pytest.raises(TreeValidationError, match="non-terminal"):
        ScenarioTree([-1, 0, 0], [1, "3/5", "2/5"], [0.0, 2.0, -1.0], {0: 1.0})
    assert binomial_tree.benchmark.tolist() == [0.0, 0.0]


def test_from_dict_reads_nested_layout():
    doc = {"S": [100.0], "children": [{"p": "3/5", "S": [102.0], "B": 1.5}, {"p": "2/5", "S": [99.0]}]}
    tree = ScenarioTree.from_dict(doc)
    assert tree.increments[1:, 0].tolist() == [2.0, -1.0]
    assert tree.benchmark.tolist() == [1.5, 0.0]
    assert tree.to_dict() == {"S": [100.0], "children": [{"S": [102.0], "p": "3/5", "B": 1.5}, {"S": [99.0], "p": "2/5", "B": 0.0}]}
    with pytest.raises(TreeValidationError, match="'p' and 'S'"):
        ScenarioTree.from_dict({"S": [1.0], "children": [{"S": [2.0]}]})


def test_wealth_recursion(two_period_tree):
    tree = two_period_tree
    theta = Strategy.from_nested(tree, {0: [1.0], 1: [2.0], 2: [-1.0]})
    process = wealth(tree, 5.0, theta)
    # node 1: +2, node 2: -1; then node 1 holds 2 and node 2 holds -1
    assert process.at_depth(1).tolist() == [7.0, 4.0]
    assert process.terminal().tolist() == [11.0, 5.0, 2.0, 5.0]
    assert process.gains()[0].tolist() == [2.0, 4.0]


def test_design_matrix_matches_wealth(tree_factory):
    tree = tree_factory(3, d=2, horizon=2)
    rng = np.random.default_rng(0)
    vector = rng.standard_normal(tree.strategy_dim)
    terminal = wealth(tree, 1.5, vector).terminal()
    assert terminal == pytest.approx(1.5 + tree.design_matrix @ vector, abs=1e-12)


def test_terminal_distribution_subtracts_benchmark():
    tree = ScenarioTree.one_step([2.0, -1.0], ["3/5", "2/5"], s0=[0.0], benchmark=1.0)
    dist = terminal_distribution(tree, 0.0, [1.0])
    assert dist.values.tolist() == [1.0, -2.0]
    assert dist.probs == pytest.approx([0.6, 0.4])


def test_strategy_shapes(two_period_tree):
    tree = two_period_tree
    with pytest.raises(ConfigurationError):
        Strategy.from_vector(tree, [1.0, 2.0])
    with pytest.raises(ConfigurationError, match="information node"):
        Strategy.from_nested(tree, {3: [1.0]})
    unit = Strategy.unit(tree, 0, -1.0, node=2)
    assert unit.at(tree, 2).tolist() == [-1.0]
    assert unit.at(tree, 0).tolist() == [0.0]
    assert (2 * unit - unit).to_vector().tolist() == [0.0, 0.0, -1.0]
    assert Strategy.zeros(tree).is_zero()
    with pytest.raises(ConfigurationError):
        wealth(tree, 0.0, Strategy(np.zeros((2, 1))))
