import numpy as np
import pytest
from scipy import stats

from cptdual.core.errors import ConfigurationError, DensitySupportError
from cptdual.core.innovations import (
    JointDensity,
    TransformChain,
    conditional_cdf,
    draw_samples,
    independentize,
    inverse_rosenblatt,
    rosenblatt,
)
from cptdual.util.stats import max_cdf_deviation, pairwise_correlations

RHO = 0.6
COV = [[1.0, RHO], [RHO, 1.0]]


@pytest.fixture(scope="module")
def correlated():
    return JointDensity.correlated_normal([0.0, 0.0], COV)


@pytest.fixture(scope="module")
def correlated_chain(correlated):
    return TransformChain.from_density(correlated)


def test_conditional_normal_cdf(correlated):
    stage = correlated.stage_density(1)
    points = np.array([[0.3, -1.0], [-1.2, 0.5], [2.0, 1.5], [0.0, 0.0]])
    # stage coordinates are (x_1, x_0)
    expected = stats.norm.cdf((points[:, 0] - RHO * points[:, 1]) / np.sqrt(1.0 - RHO**2))
    assert conditional_cdf(stage, points) == pytest.approx(expected, abs=1e-4)
    assert conditional_cdf(stage, points[0]) == pytest.approx(expected[0], abs=1e-4)


def test_first_stage_is_the_marginal(correlated_chain):
    x = np.array([[-1.5, 0.0], [0.2, 0.0], [1.1, 0.0]])
    assert correlated_chain.stage(0, x) == pytest.approx(stats.norm.cdf(x[:, 0]), abs=1e-4)


def test_outputs_are_independent_uniforms(correlated, correlated_chain):
    samples = draw_samples(correlated, 10_000, seed=0, chain=correlated_chain)
    assert abs(np.corrcoef(samples, rowvar=False)[0, 1] - RHO) < 0.05
    u = rosenblatt(correlated_chain, samples, threads=2)
    assert u.shape == samples.shape
    assert max(max_cdf_deviation(u[:, i]) for i in range(2)) < 0.02
    assert np.all(np.abs(pairwise_correlations(u)) < 0.05)


def test_inverse_undoes_forward(correlated_chain):
    rng = np.random.default_rng(5)
    x = rng.uniform(-2.0, 2.0, size=(50, 2))
    u = correlated_chain.forward(x)
    assert inverse_rosenblatt(correlated_chain, u) == pytest.approx(x, abs=1e-6)
    assert inverse_rosenblatt(correlated_chain, u[0]) == pytest.approx(x[0], abs=1e-6)


def test_stages_read_only_their_past(correlated_chain):
    assert correlated_chain.reads(0) == (0,)
    assert correlated_chain.reads(1) == (0, 1)
    x = np.array([[0.4, -0.3]])
    moved = x.copy()
    moved[0, 1] = 1.7
    # changing x_1 leaves the first output alone
    assert correlated_chain.forward(moved)[0, 0] == correlated_chain.forward(x)[0, 0]
    assert correlated_chain.check_monotone(points=9, conditioning=3)


def test_factorized_density_uses_marginals():
    density = JointDensity.product_normal(3, nodes=129)
    chain = TransformChain.from_density(density)
    assert chain.factorized
    assert chain.reads(2) == (2,)
    x = np.array([[0.5, -1.0, 2.0], [0.0, 0.1, -0.7]])
    assert chain.forward(x) == pytest.approx(stats.norm.cdf(x), abs=1e-12)


def test_independentize_blocks():
    density = JointDensity.correlated_normal(np.zeros(4), 0.5 * np.eye(4) + 0.5, nodes=129)
    chain = TransformChain.from_density(density)
    samples = draw_samples(density, 200, seed=1)
    blocks = independentize(density, samples.reshape(200, 2, 2), T=2, N=2, chain=chain)
    assert blocks.shape == (200, 2, 2)
    assert np.all((blocks >= 0.0) & (blocks <= 1.0))
    flat = independentize(density, samples, T=2, N=2, chain=chain)
    assert np.array_equal(flat, blocks)
    with pytest.raises(ConfigurationError):
        independentize(density, samples, T=3, N=1, chain=chain)
    with pytest.raises(ConfigurationError):
        independentize(density, samples.reshape(200, 4, 1), T=2, N=2, chain=chain)


def test_grid_density_matches_analytic():
    axis = np.linspace(-6.0, 6.0, 121)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    law = stats.multivariate_normal([0.0, 0.0], COV)
    values = law.pdf(np.stack([xx, yy], axis=-1))
    density = JointDensity.from_grid(values, [-6.0, -6.0], [6.0, 6.0], nodes=257)
    chain = TransformChain.from_density(density)
    point = np.array([[0.5, 0.8]])
    expected = stats.norm.cdf((0.8 - RHO * 0.5) / np.sqrt(1.0 - RHO**2))
    assert chain.forward(point)[0, 1] == pytest.approx(expected, abs=5e-3)


def test_support_errors(correlated):
    with pytest.raises(DensitySupportError, match="outside"):
        conditional_cdf(correlated.stage_density(1), [20.0, 0.0])

    def vanishing(points):
        points = np.asarray(points)
        return np.where(points[..., 0] > 0, 2.0 * stats.norm.pdf(points[..., 0]) * stats.norm.pdf(points[..., 1]), 0.0)

    half = JointDensity(2, vanishing, [-8.0, -8.0], [8.0, 8.0], nodes=65)
    with pytest.raises(DensitySupportError, match="not positive"):
        half.validate()

    light = JointDensity(1, lambda p: 0.5 * stats.norm.pdf(np.asarray(p)[..., 0]), [-8.0], [8.0], nodes=65)
    with pytest.raises(DensitySupportError, match="mass"):
        light.validate()


def test_density_checks():
    with pytest.raises(ConfigurationError):
        JointDensity(2, lambda p: p[..., 0], [0.0], [1.0])
    with pytest.raises(ConfigurationError):
        JointDensity(1, lambda p: p[..., 0], [1.0], [0.0])
    with pytest.raises(ConfigurationError):
        JointDensity(1, lambda p: p[..., 0], [0.0], [1.0], factorized=True)
    with pytest.raises(ConfigurationError):
        JointDensity.correlated_normal([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_sampler_free_density_is_inverted():
    density = JointDensity(1, lambda p: stats.norm.pdf(np.asarray(p)[..., 0]), [-8.0], [8.0], nodes=257)
    samples = draw_samples(density, 2000, seed=3)
    assert samples.shape == (2000, 1)
    assert stats.kstest(samples[:, 0], "norm").statistic < 0.04
