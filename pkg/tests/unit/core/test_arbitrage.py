import numpy as np
import pytest

from cptdual.core.arbitrage import check_robust_na, unit_directions
from cptdual.core.errors import ConfigurationError
from cptdual.core.market import ScenarioTree


def test_binomial_certificate(binomial_tree):
    certificate = check_robust_na(binomial_tree)
    assert certificate.passed
    assert certificate.exact
    assert certificate.kappa.tolist() == [1.0]
    assert certificate.beta == pytest.approx([0.4])
    assert certificate.failure is None


def test_small_moves_give_small_kappa():
    tree = ScenarioTree.one_step([0.5, -0.25], ["1/2", "1/2"], s0=[0.0])
    certificate = check_robust_na(tree)
    assert certificate.passed
    assert certificate.kappa_at(tree, 0) == pytest.approx(0.25)
    assert certificate.beta_at(tree, 0) == pytest.approx(0.5)


def test_one_signed_increments_fail(arbitrage_tree):
    certificate = check_robust_na(arbitrage_tree)
    assert not certificate.passed
    assert certificate.failure.node == 0
    assert certificate.failure.direction.tolist() == [1.0]
    assert "node 0" in certificate.failure.describe()


def test_flat_node_fails():
    tree = ScenarioTree.one_step([0.0, 0.0], ["1/2", "1/2"], s0=[0.0])
    assert not check_robust_na(tree).passed


def test_two_asset_certificate_covers_grid(tree_factory):
    tree = tree_factory(11, d=2, horizon=2)
    certificate = check_robust_na(tree, direction_grid=64)
    assert certificate.passed
    assert not certificate.exact
    assert np.all(certificate.kappa > 0)
    assert np.all(certificate.kappa <= 1.0)
    assert np.all(certificate.beta > 0)
    frame = certificate.to_frame(tree)
    assert frame["node"].tolist() == tree.internal.tolist()


def test_two_asset_half_plane_fails():
    increments = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    tree = ScenarioTree.one_step(increments, ["1/3", "1/3", "1/3"], s0=[0.0, 0.0])
    certificate = check_robust_na(tree)
    assert not certificate.passed
    # the failing direction gains on every branch
    assert np.all(np.asarray(increments) @ certificate.failure.direction >= -1e-12)


def test_unit_directions():
    assert unit_directions(1).tolist() == [[1.0], [-1.0]]
    directions = unit_directions(3, grid=16)
    assert directions.shape == (22, 3)
    assert np.linalg.norm(directions, axis=1) == pytest.approx(np.ones(22))
    assert unit_directions(4, grid=8, seed=1) == pytest.approx(unit_directions(4, grid=8, seed=1))
    with pytest.raises(ConfigurationError):
        unit_directions(0)


def test_beta_min_domain(binomial_tree):
    with pytest.raises(ConfigurationError):
        check_robust_na(binomial_tree, beta_min=0.0)
