import os

import numpy as np
import pytest

from cptdual.core.errors import ConfigurationError
from cptdual.io import load_density_grid, write_density_grid


def test_load_grid(test_data_path):
    density = load_density_grid(os.path.join(test_data_path, "density_grid.txt"), nodes=33)
    assert density.dim == 2
    assert density.low.tolist() == [-1.0, -1.0]
    assert density.high.tolist() == [1.0, 1.0]
    assert density([0.0, 0.0]) == pytest.approx(0.3125)
    # linear between the centre and the edge midpoint
    assert density([0.5, 0.0]) == pytest.approx(0.28125)


def test_written_grid_loads_back(tmp_path):
    values = np.arange(1.0, 13.0).reshape(3, 4)
    path = str(tmp_path / "grid.txt")
    write_density_grid(path, values, [0.0, -1.0], [2.0, 1.0])
    density = load_density_grid(path, nodes=9, name="table")
    assert density.name == "table"
    assert density([1.0, 1.0]) == pytest.approx(8.0)
    assert density([2.0, -1.0]) == pytest.approx(9.0)


def test_malformed_grids(tmp_path):
    missing = tmp_path / "missing.txt"
    missing.write_text("# dims 2\n# low 0\n1.0\n2.0\n")
    with pytest.raises(ConfigurationError, match="missing"):
        load_density_grid(str(missing))
    short = tmp_path / "short.txt"
    short.write_text("# dims 3\n# low 0\n# high 1\n1.0\n2.0\n")
    with pytest.raises(ConfigurationError, match="expected 3"):
        load_density_grid(str(short))
    words = tmp_path / "words.txt"
    words.write_text("# dims 2\n# low 0\n# high 1\n1.0\nabc\n")
    with pytest.raises(ConfigurationError, match="Non-numeric"):
        load_density_grid(str(words))
