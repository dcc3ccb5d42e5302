import numpy as np
import pytest

from cptdual.core.dual import construct_q
from cptdual.core.errors import ConfigurationError, DomainError
from cptdual.core.lemmas import SCALES, StressFamily, check_moz1, check_moz2, check_suti


@pytest.fixture
def binomial_density(binomial_tree):
    return construct_q(binomial_tree)


def test_family_is_seeded():
    first = StressFamily(seed=4, count=20).members()
    second = StressFamily(seed=4, count=20).members()
    other = StressFamily(seed=5, count=20).members()
    assert all(np.array_equal(a.values, b.values) for a, b in zip(first, second))
    assert not all(np.array_equal(a.values, b.values) for a, b in zip(first, other))
    assert all(np.all(m.values >= 0) and np.all(m.values <= 10.0) for m in first)
    assert all(m.probs.sum() == pytest.approx(1.0) for m in first)


def test_family_checks():
    with pytest.raises(ConfigurationError):
        StressFamily(count=0)
    with pytest.raises(ConfigurationError):
        StressFamily(min_atoms=3, max_atoms=2)
    with pytest.raises(ConfigurationError):
        StressFamily(kind="pareto")


def test_leaf_members_keep_the_q_mean(binomial_density):
    for kind in ("random", "constant", "two_point"):
        family = StressFamily(seed=1, count=30, low=-5.0, high=5.0, kind=kind, m=0.25)
        for x in family.leaf_members(binomial_density):
            assert float(np.dot(binomial_density.q_leaf, x)) == pytest.approx(0.25, abs=1e-9 * max(1.0, np.abs(x).max()))


def test_suti_constant_stays_bounded():
    report = check_suti(StressFamily(seed=0, count=100), a=0.8, b=1.2, s=1.0)
    assert report.passed
    assert report.trend <= 1e-6
    assert np.isfinite(report.constants["D"])
    assert len(report.max_ratio_by_scale) == SCALES.size
    assert set(report.members.columns) == {"member", "scale", "lhs", "rhs", "ratio"}
    assert report.members.shape[0] == 100 * SCALES.size


def test_suti_domain():
    with pytest.raises(DomainError):
        check_suti(StressFamily(count=5), a=1.0, b=1.0, s=1.0)


def test_moz2_exponent_on_constants():
    report = check_moz2(StressFamily(seed=0, count=40, kind="constant", low=0.5, high=10.0), a=0.5, b=1.5, s=0.5)
    assert report.exponent == pytest.approx(0.5 / 1.5, abs=0.01)
    assert report.passed
    assert np.isfinite(report.constants["R2"])


def test_moz2_random_family_passes():
    report = check_moz2(StressFamily(seed=2, count=60), a=0.5, b=1.5, s=0.5, threads=2)
    assert report.exponent == pytest.approx(1.0 / 3.0, abs=1e-6)
    assert report.exponent <= 0.99
    assert report.trend <= 1e-6
    assert report.passed


def test_moz2_domain():
    with pytest.raises(DomainError):
        check_moz2(StressFamily(count=5), a=0.5, b=1.5, s=0.8)
    with pytest.raises(DomainError):
        check_moz2(StressFamily(count=5), a=1.5, b=0.5, s=0.2)


def test_moz1_picks_interior_eta(binomial_density):
    family = StressFamily(seed=0, count=44, kind="two_point")
    report = check_moz1(family, binomial_density, 0.5, 0.9, 0.6, 0.8, m=0.0)
    assert 0.8 < report.exponent < 0.9
    assert not report.inconclusive
    assert report.passed
    assert report.constants["L2"] <= 2.0 * report.constants["L2_half"] + 1e-12
    assert report.parameters["m"] == 0.0


def test_moz1_domain(binomial_density):
    family = StressFamily(count=5, kind="two_point")
    with pytest.raises(DomainError):
        check_moz1(family, binomial_density, 0.9, 0.8, 0.6, 0.8)
    with pytest.raises(DomainError):
        check_moz1(family, binomial_density, 0.7, 0.9, 0.6, 0.8)


def test_reports_summarize():
    report = check_suti(StressFamily(count=5), a=0.8, b=1.2, s=1.0)
    summary = report.to_summary()
    assert summary["lemma"] == "suti"
    assert summary["parameters"] == {"a": 0.8, "b": 1.2, "s": 1.0}
