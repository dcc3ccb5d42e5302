import numpy as np
import pytest

from cptdual.util.parallel import parallel_map
from cptdual.util.rng import make_rng


def test_streams_are_reproducible():
    first = make_rng(7, "optimize", "start", 2).normal(size=5)
    second = make_rng(7, "optimize", "start", 2).normal(size=5)
    assert np.array_equal(first, second)


def test_streams_are_distinct():
    base = make_rng(7, "optimize", "start", 2).normal(size=5)
    assert not np.array_equal(base, make_rng(7, "optimize", "start", 3).normal(size=5))
    assert not np.array_equal(base, make_rng(8, "optimize", "start", 2).normal(size=5))
    assert not np.array_equal(base, make_rng(7, "probe", "start", 2).normal(size=5))


def test_bad_seeds():
    with pytest.raises(ValueError):
        make_rng(-1)
    with pytest.raises(ValueError):
        make_rng(0, -3)


def test_parallel_map_keeps_order():
    items = list(range(40))
    expected = [i * i for i in items]
    assert parallel_map(lambda i: i * i, items) == expected
    assert parallel_map(lambda i: i * i, items, threads=4) == expected
    assert parallel_map(lambda i: i, [], threads=4) == []
    with pytest.raises(ValueError):
        parallel_map(lambda i: i, items, threads=0)
