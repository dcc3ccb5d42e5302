"""
Quantitative no-arbitrage certificates.

At every information node we look for ``kappa`` in (0, 1] and ``beta`` > 0
with ``P(xi . dS <= -kappa | node) >= beta`` for every probed unit direction
``xi``.  For one asset the two directions +1/-1 are the whole sphere, so the
certificate is exact; for more assets it is only as good as the direction
grid.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd

from cptdual.core.errors import ConfigurationError
from cptdual.core.market import ScenarioTree
from cptdual.util.rng import make_rng

logger = logging.getLogger(__name__)

DEFAULT_DIRECTION_GRID = 64
DEFAULT_BETA_MIN = 1e-6
_TIE_TOLERANCE = 1e-12


def unit_directions(d: int, grid: int = DEFAULT_DIRECTION_GRID, seed: int = 0) -> np.ndarray:
    """
    Unit vectors probed by the certificate, shape ``(K, d)``.

    ``d == 1`` gives exactly ``[+1], [-1]``.  ``d == 2`` uses ``grid``
    equiangular directions, ``d == 3`` a Fibonacci spiral of ``grid`` points
    and higher dimensions ``grid`` seeded Gaussian directions.  For ``d >= 2``
    the signed coordinate axes are always included.
    """
    if d < 1:
        raise ConfigurationError("Dimension must be at least 1")
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if grid < 1:
        raise ConfigurationError("direction_grid must be a positive integer")
    if d == 2:
        angles = 2.0 * np.pi * np.arange(grid) / grid
        spread = np.column_stack([np.cos(angles), np.sin(angles)])
    elif d == 3:
        k = np.arange(grid) + 0.5
        polar = np.arccos(1.0 - 2.0 * k / grid)
        azimuth = np.pi * (1.0 + 5.0**0.5) * k
        spread = np.column_stack([np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)])
    else:
        spread = make_rng(seed, "na", "directions", d).standard_normal((grid, d))
        spread /= np.linalg.norm(spread, axis=1, keepdims=True)
    axes = np.vstack([np.eye(d), -np.eye(d)])
    return np.vstack([axes, spread])


@dataclass
class NaFailure:
    node: int
    direction: np.ndarray
    reason: str

    def describe(self) -> str:
        return f"node {self.node}, direction {np.round(self.direction, 6).tolist()}: {self.reason}"


@dataclass
class NaCertificate:
    """
    Per information node ``kappa_t`` and ``beta_t`` (arrays aligned with
    ``tree.internal``), and whether every node passed.

    ``exact`` is True when the direction set covers the whole sphere (one
    asset); otherwise the certificate is grid-sufficient only.
    """

    nodes: np.ndarray
    kappa: np.ndarray
    beta: np.ndarray
    passed: bool
    exact: bool
    beta_min: float
    directions: np.ndarray
    failures: List[NaFailure] = field(default_factory=list)

    @property
    def failure(self) -> Optional[NaFailure]:
        return self.failures[0] if self.failures else None

    def kappa_at(self, tree: ScenarioTree, node: int) -> float:
        return float(self.kappa[tree.internal_index[node]])

    def beta_at(self, tree: ScenarioTree, node: int) -> float:
        return float(self.beta[tree.internal_index[node]])

    def to_frame(self, tree: ScenarioTree) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "node": self.nodes,
                "depth": tree.depth[self.nodes],
                "kappa": self.kappa,
                "beta": self.beta,
            }
        )

    def to_summary(self) -> dict:
        summary = {
            "passed": self.passed,
            "exact": self.exact,
            "beta_min": self.beta_min,
            "directions": int(self.directions.shape[0]),
            "kappa": self.kappa.tolist(),
            "beta": self.beta.tolist(),
            "nodes": self.nodes.tolist(),
        }
        if self.failure is not None:
            summary["failure"] = {"node": self.failure.node, "direction": self.failure.direction.tolist(), "reason": self.failure.reason}
        return summary


def _node_certificate(increments: np.ndarray, probs: np.ndarray, directions: np.ndarray, beta_min: float):
    # losses[i, k] = -(xi_k . dS_i); the event {xi . dS <= -kappa} is {loss >= kappa}
    losses = -increments @ directions.T
    order = np.argsort(-losses, axis=0, kind="stable")
    sorted_losses = np.take_along_axis(losses, order, axis=0)
    tail = np.cumsum(probs[order], axis=0)
    # P(loss >= kappa) is a step function, so the largest admissible kappa is
    # the first sorted loss level where the tail mass reaches beta_min
    first = np.argmax(tail >= beta_min - _TIE_TOLERANCE, axis=0)
    kappa_by_direction = sorted_losses[first, np.arange(directions.shape[0])]
    worst = int(np.argmin(kappa_by_direction))
    kappa = min(1.0, float(kappa_by_direction[worst]))
    if kappa <= 0.0:
        return kappa, 0.0, worst
    beta_by_direction = ((losses >= kappa - _TIE_TOLERANCE) * probs[:, None]).sum(axis=0)
    worst_beta = int(np.argmin(beta_by_direction))
    return kappa, float(beta_by_direction[worst_beta]), worst_beta


def check_robust_na(tree: ScenarioTree, direction_grid: int = DEFAULT_DIRECTION_GRID, beta_min: float = DEFAULT_BETA_MIN, seed: int = 0) -> NaCertificate:
    """
    Compute the robust no-arbitrage certificate of ``tree``.

    For every information node, ``kappa`` is the largest value in (0, 1] for
    which every probed direction loses at least ``kappa`` with conditional
    probability at least ``beta_min``; ``beta`` is the worst such
    probability at that ``kappa``.

    A node whose increments lie in a half-space excluding 0 in some probed
    direction makes the certificate fail; the failure names that node and
    direction.  Failure is reported, never raised.

    Parameters
    ----------
    tree : ScenarioTree
    direction_grid : int
        Number of sphere directions for ``d >= 2`` (ignored for ``d == 1``)
    beta_min : float
        Smallest conditional probability accepted while searching ``kappa``
    seed : int
        Seed for the random directions used when ``d > 3``
    """
    if not (0.0 < beta_min <= 1.0):
        raise ConfigurationError("beta_min must lie in (0, 1]")
    directions = unit_directions(tree.d, direction_grid, seed)
    kappa = np.zeros(tree.n_internal)
    beta = np.zeros(tree.n_internal)
    failures = []
    for row, node in enumerate(tree.internal):
        kids = tree.children[node]
        k, b, worst = _node_certificate(tree.increments[kids], tree.cond_prob[kids], directions, beta_min)
        if k <= 0.0 or b <= 0.0:
            failures.append(NaFailure(int(node), directions[worst].copy(), "no loss with positive probability in this direction"))
            logger.info("No-arbitrage check failed at node %d", node)
            continue
        kappa[row], beta[row] = k, b

    certificate = NaCertificate(
        nodes=tree.internal.copy(),
        kappa=kappa,
        beta=beta,
        passed=not failures,
        exact=tree.d == 1,
        beta_min=beta_min,
        directions=directions,
        failures=failures,
    )
    if certificate.passed:
        logger.debug("No-arbitrage certificate: min kappa %.3g, min beta %.3g", kappa.min(), beta.min())
    return certificate
