import numpy as np
import pytest

from cptdual.core import dual
from cptdual.core.arbitrage import check_robust_na
from cptdual.core.dual import (
    MartingaleDensity,
    UtilityU,
    admissible_pi_range,
    construct_q,
    moment_diagnostics,
    theta_moment_bound,
    verify_martingale,
)
from cptdual.core.errors import ArbitrageError, ConvergenceError, DomainError
from cptdual.core.market import Strategy
from cptdual.util.rng import make_rng


def test_utility_u_pieces():
    x = np.array([-2.0, 0.0, 3.0])
    assert UtilityU.value(x).tolist() == [-4.5, -0.5, 2.5]
    assert UtilityU.derivative(x).tolist() == [3.0, 1.0, 1.0]
    assert UtilityU.second_derivative(x).tolist() == [-1.0, 0.0, 0.0]


def test_binomial_measure(binomial_tree):
    density = construct_q(binomial_tree)
    assert density.q_branch[1] == pytest.approx(1.0 / 3.0, abs=1e-8)
    assert density.q_branch[2] == pytest.approx(2.0 / 3.0, abs=1e-8)
    assert density.phi_star.to_vector() == pytest.approx([2.0], abs=1e-8)
    assert np.dot(binomial_tree.leaf_prob, density.rho) == pytest.approx(1.0, abs=1e-14)
    assert verify_martingale(binomial_tree, density) <= 1e-8
    assert density.gradient_norm <= 1e-10


def test_symmetric_market_keeps_p(symmetric_tree):
    density = construct_q(symmetric_tree)
    assert density.rho == pytest.approx([1.0, 1.0], abs=1e-12)
    assert density.iterations == 0
    assert density.trace_frame().shape[0] == 1


def test_random_trees_are_martingales(tree_factory):
    for seed in range(50):
        tree = tree_factory(seed, d=1 + seed % 2, horizon=1 + seed % 3)
        density = construct_q(tree)
        assert verify_martingale(tree, density) <= 1e-8, f"tree {seed}"
        assert np.all(density.rho > 0)
        assert density.q_leaf.sum() == pytest.approx(1.0, abs=1e-12)

        theta = Strategy.from_vector(tree, make_rng(seed, "tests", "theta").standard_normal(tree.strategy_dim))
        report = moment_diagnostics(tree, density, 0.7, theta, pi=1.2)
        assert report.wealth_mean == pytest.approx(np.full(tree.T + 1, 0.7), abs=1e-8)
        assert report.martingale_ok
        assert report.remark_holds
        assert report.positive_part_ok


def test_arbitrage_is_refused(arbitrage_tree):
    with pytest.raises(ArbitrageError) as info:
        construct_q(arbitrage_tree)
    assert info.value.certificate.failure.node == 0


def test_iteration_cap(tree_factory):
    tree = tree_factory(5, d=2, horizon=2)
    with pytest.raises(ConvergenceError) as info:
        construct_q(tree, tol=1e-300, max_iter=1)
    assert info.value.iterations == 1


def test_large_martingale_residual_is_not_converged(binomial_tree, monkeypatch):
    monkeypatch.setattr(dual, "verify_martingale", lambda tree, density: 1e-3)
    with pytest.raises(ConvergenceError):
        construct_q(binomial_tree, max_iter=5)


def test_from_rho_rejects_bad_densities(binomial_tree):
    with pytest.raises(DomainError):
        MartingaleDensity.from_rho(binomial_tree, [1.0, -1.0])
    with pytest.raises(DomainError):
        MartingaleDensity.from_rho(binomial_tree, [1.0])
    density = MartingaleDensity.from_rho(binomial_tree, [5.0 / 9.0, 15.0 / 9.0])
    assert density.rho_t[0] == pytest.approx(1.0)
    assert verify_martingale(binomial_tree, density) == pytest.approx(0.0, abs=1e-14)


def test_moment_report_binomial(binomial_tree):
    density = construct_q(binomial_tree)
    report = moment_diagnostics(binomial_tree, density, 1.0, [1.0], pi=1.5, xi=0.5)
    # X_T is 3 with Q = 1/3 and 0 with Q = 2/3
    assert report.positive_terminal_mean == pytest.approx(1.0, abs=1e-8)
    assert report.negative_terminal_moment == pytest.approx(0.0)
    assert report.theta_moment == pytest.approx([1.0])
    assert report.to_frame()["t"].tolist() == [0, 1]
    assert report.to_summary()["remark_holds"] is True


def test_moment_domain(binomial_tree):
    density = construct_q(binomial_tree)
    with pytest.raises(DomainError):
        moment_diagnostics(binomial_tree, density, 0.0, [1.0], pi=1.0)
    with pytest.raises(DomainError):
        moment_diagnostics(binomial_tree, density, 0.0, [1.0], pi=1.5, xi=1.0)


def test_theta_moment_bound_holds(tree_factory):
    for seed in range(20):
        tree = tree_factory(100 + seed, d=1 + seed % 2, horizon=2)
        certificate = check_robust_na(tree)
        density = construct_q(tree, certificate=certificate)
        rng = make_rng(seed, "tests", "bound")
        for _ in range(5):
            theta = Strategy.from_vector(tree, 10.0 * rng.standard_normal(tree.strategy_dim))
            for t in range(1, tree.T + 1):
                lhs, rhs = theta_moment_bound(tree, density, certificate, theta, t)
                assert lhs <= rhs * (1.0 + 1e-9) + 1e-12, f"tree {seed}, t={t}"


def test_theta_moment_bound_domain(binomial_tree, arbitrage_tree):
    certificate = check_robust_na(binomial_tree)
    density = construct_q(binomial_tree, certificate=certificate)
    with pytest.raises(DomainError):
        theta_moment_bound(binomial_tree, density, certificate, [1.0], 2)
    failing = check_robust_na(arbitrage_tree)
    with pytest.raises(ArbitrageError):
        theta_moment_bound(binomial_tree, density, failing, [1.0], 1)


def test_admissible_pi_range():
    assert admissible_pi_range(0.9, 0.8, 1.0) == pytest.approx((1.0, 1.125))
    assert admissible_pi_range(0.9, 0.8, 0.1) == pytest.approx((1.0, 1.05))
    assert admissible_pi_range(0.8, 0.9, 1.0) is None
    with pytest.raises(DomainError):
        admissible_pi_range(0.9, 0.0, 1.0)
