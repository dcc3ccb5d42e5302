"""
Finite discrete laws
"""
from typing import Callable, Iterable, List, Tuple

import numpy as np

from cptdual.core.errors import ConfigurationError

PROBABILITY_TOLERANCE = 1e-12


class DiscreteDistribution:
    """
    A finite law given by atoms ``(value, probability)``.

    Duplicate values are allowed; :meth:`normalized` merges them.

    Parameters
    ----------
    values : array-like
        Atom values
    probs : array-like
        Atom probabilities, each in (0, 1], summing to one within
        :data:`PROBABILITY_TOLERANCE`
    """

    def __init__(self, values, probs, validate: bool = True):
        values = np.array(values, dtype=float, ndmin=1)
        probs = np.array(probs, dtype=float, ndmin=1)
        if values.shape != probs.shape or values.ndim != 1:
            raise ConfigurationError(f"values and probs must be matching vectors, got {values.shape} and {probs.shape}")
        if validate:
            if values.size == 0:
                raise ConfigurationError("A distribution needs at least one atom")
            if np.any(~np.isfinite(values)):
                raise ConfigurationError("Atom values must be finite")
            if np.any(probs <= 0) or np.any(probs > 1):
                raise ConfigurationError("Atom probabilities must lie in (0, 1]")
            total = probs.sum()
            if abs(total - 1.0) > PROBABILITY_TOLERANCE:
                raise ConfigurationError(f"Atom probabilities sum to {total!r}, not 1")
        values.flags.writeable = False
        probs.flags.writeable = False
        self.values = values
        self.probs = probs

    @classmethod
    def from_atoms(cls, atoms: Iterable[Tuple[float, float]]) -> "DiscreteDistribution":
        atoms = list(atoms)
        return cls([a[0] for a in atoms], [a[1] for a in atoms])

    @classmethod
    def constant(cls, value: float) -> "DiscreteDistribution":
        return cls([value], [1.0])

    @property
    def atoms(self) -> List[Tuple[float, float]]:
        return list(zip(self.values.tolist(), self.probs.tolist()))

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"DiscreteDistribution(atoms={len(self)})"

    def normalized(self) -> "DiscreteDistribution":
        """Merge atoms with equal values; values come back sorted ascending."""
        unique, inverse = np.unique(self.values, return_inverse=True)
        merged = np.bincount(inverse.ravel(), weights=self.probs, minlength=unique.size)
        return DiscreteDistribution(unique, merged, validate=False)

    def expectation(self, func: Callable[[np.ndarray], np.ndarray] = None) -> float:
        values = self.values if func is None else func(self.values)
        return float(np.dot(self.probs, values))

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "DiscreteDistribution":
        return DiscreteDistribution(func(self.values), self.probs, validate=False)

    def scaled(self, c: float) -> "DiscreteDistribution":
        return self.map(lambda v: c * v)

    def shifted(self, c: float) -> "DiscreteDistribution":
        return self.map(lambda v: v + c)
