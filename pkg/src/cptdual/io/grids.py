"""
Plain-text tabulated densities.

The file starts with header lines, then one density value per line in C
order (last axis fastest)::

    # dims 65 65
    # low -8 -8
    # high 8 8
    1.2e-28
    ...
"""
from logging import getLogger
from typing import Optional

import numpy as np

from cptdual.core.errors import ConfigurationError
from cptdual.core.innovations import DEFAULT_NODES, JointDensity

HEADER_KEYS = ("dims", "low", "high")

logger = getLogger(__name__)


def _read_header(lines):
    header = {}
    for line in lines:
        parts = line.lstrip("#").split()
        if parts and parts[0] in HEADER_KEYS:
            header[parts[0]] = [float(v) for v in parts[1:]]
    missing = [key for key in HEADER_KEYS if key not in header]
    if missing:
        raise ConfigurationError(f"Grid header is missing {missing}")
    return header


def load_density_grid(path: str, nodes: int = DEFAULT_NODES, name: Optional[str] = None) -> JointDensity:
    """
    Load a tabulated density as a :class:`JointDensity` interpolated linearly
    between grid points.

    Raises
    ------
    ConfigurationError
        On a malformed header or a value count that does not match ``dims``.
    """
    with open(path, "rt") as f:
        lines = [line.strip() for line in f if line.strip()]
    header = _read_header([line for line in lines if line.startswith("#")])
    shape = tuple(int(n) for n in header["dims"])
    try:
        values = np.array([float(line) for line in lines if not line.startswith("#")])
    except ValueError as e:
        raise ConfigurationError(f"Non-numeric density value in {path}: {e}") from e
    if values.size != int(np.prod(shape)):
        raise ConfigurationError(f"Grid {path} has {values.size} values, expected {int(np.prod(shape))} for dims {shape}")
    if len(header["low"]) != len(shape) or len(header["high"]) != len(shape):
        raise ConfigurationError("Grid header low/high must have one entry per axis")
    logger.debug("Loaded density grid %s with shape %s", path, shape)
    return JointDensity.from_grid(values.reshape(shape), header["low"], header["high"], nodes=nodes, name=name or path)


def write_density_grid(path: str, values, low, high):
    """Write a tabulated density in the format :func:`load_density_grid` reads."""
    values = np.asarray(values, dtype=float)
    with open(path, "wt") as f:
        f.write("# dims " + " ".join(str(n) for n in values.shape) + "\n")
        f.write("# low " + " ".join(repr(float(v)) for v in np.atleast_1d(low)) + "\n")
        f.write("# high " + " ".join(repr(float(v)) for v in np.atleast_1d(high)) + "\n")
        for v in values.ravel():
            f.write(f"{float(v)!r}\n")
