"""
Empirical checks of distorted-moment inequalities over stress families.

The inequalities hold with constants that are only known to exist, so each
check estimates the constants over a family of finite laws and asks whether
they stay bounded as the family is pushed along a dyadic scale ladder.
All distorted integrals use the same exact step sum as the CPT evaluator.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from cptdual.core.cpt import distorted_integral, power_distortion
from cptdual.core.distribution import DiscreteDistribution
from cptdual.core.dual import MartingaleDensity
from cptdual.core.errors import ConfigurationError, DomainError
from cptdual.util.parallel import parallel_map
from cptdual.util.rng import make_rng
from cptdual.util.stats import log_log_slope, trend_slope

logger = logging.getLogger(__name__)

SCALES = 2.0 ** np.arange(11)
FAMILY_KINDS = ("random", "constant", "two_point")
DEFAULT_TREND_TOLERANCE = 1e-6
ZETA_MARGIN = 0.01
ETA_GRID_POINTS = 64


@dataclass
class StressFamily:
    """
    Seeded family of finite laws.

    Parameters
    ----------
    seed : int
    count : int
        Number of members
    min_atoms, max_atoms : int
        Atom-count range of ``random`` members
    low, high : float
        Value range
    kind : str
        ``random`` (random atoms with Dirichlet weights), ``constant``
        (single atoms) or ``two_point`` (spreads ``2^k`` around a mean, only
        for mean-constrained families)
    m : float, optional
        Required ``E_Q`` mean for families built on a martingale density
    """

    seed: int = 0
    count: int = 200
    min_atoms: int = 1
    max_atoms: int = 8
    low: float = 0.0
    high: float = 10.0
    kind: str = "random"
    m: Optional[float] = None

    def __post_init__(self):
        if self.count < 1:
            raise ConfigurationError("count must be at least 1")
        if not (1 <= self.min_atoms <= self.max_atoms):
            raise ConfigurationError("Need 1 <= min_atoms <= max_atoms")
        if not self.low <= self.high:
            raise ConfigurationError("Need low <= high")
        if self.kind not in FAMILY_KINDS:
            raise ConfigurationError(f"kind must be one of {FAMILY_KINDS}, got {self.kind!r}")

    def members(self) -> List[DiscreteDistribution]:
        """Nonnegative laws (``low`` is clipped at 0)."""
        low = max(self.low, 0.0)
        members = []
        for i in range(self.count):
            rng = make_rng(self.seed, "family", self.kind, i)
            if self.kind == "constant":
                members.append(DiscreteDistribution.constant(rng.uniform(low, self.high)))
                continue
            if self.kind == "two_point":
                spread = 2.0 ** (i % 11)
                members.append(DiscreteDistribution([0.0, spread], [0.5, 0.5]))
                continue
            n = int(rng.integers(self.min_atoms, self.max_atoms + 1))
            values = rng.uniform(low, self.high, n)
            probs = rng.dirichlet(np.ones(n))
            probs = np.maximum(probs, 1e-12)
            members.append(DiscreteDistribution(values, probs / probs.sum(), validate=False))
        return members

    def leaf_members(self, density: MartingaleDensity) -> List[np.ndarray]:
        """
        Random variables on the leaves of the tree ``density`` lives on, each
        with ``E_Q X = m`` (``m`` defaults to 0).
        """
        m = 0.0 if self.m is None else float(self.m)
        q = density.q_leaf
        n = q.size
        members = []
        for i in range(self.count):
            rng = make_rng(self.seed, "family", self.kind, "leaves", i)
            if self.kind == "two_point":
                in_a = np.arange(n) % 2 == 0
                q_a = float(q[in_a].sum())
                spread = 2.0 ** (i % 11)
                x = m + spread * np.where(in_a, 1.0 - q_a, -q_a)
            elif self.kind == "constant":
                x = np.full(n, m)
            else:
                x = rng.uniform(self.low, self.high, n)
                x = x + (m - float(np.dot(q, x)))
            members.append(x)
        return members


@dataclass
class InequalityReport:
    """
    Per-member sides of an inequality and the fitted constants.

    ``members`` has one row per (member, scale) with columns ``member``,
    ``scale``, ``lhs``, ``rhs``, ``ratio``.
    """

    lemma: str
    members: pd.DataFrame
    constants: Dict[str, float]
    max_ratio: float
    max_ratio_by_scale: List[float]
    trend: float
    passed: bool
    exponent: Optional[float] = None
    exponent_residual: Optional[float] = None
    inconclusive: bool = False
    parameters: Dict[str, float] = field(default_factory=dict)

    def to_summary(self) -> dict:
        return {
            "lemma": self.lemma,
            "parameters": self.parameters,
            "constants": self.constants,
            "max_ratio": self.max_ratio,
            "max_ratio_by_scale": self.max_ratio_by_scale,
            "trend": self.trend,
            "exponent": self.exponent,
            "exponent_residual": self.exponent_residual,
            "passed": self.passed,
            "inconclusive": self.inconclusive,
        }


def _power_integral(values, probs, exponent: float, distortion: float) -> float:
    """``int_0^inf P(X^exponent > y)^distortion dy`` for nonnegative ``X``."""
    return distorted_integral(np.power(np.maximum(values, 0.0), exponent), probs, power_distortion(distortion))


def _by_scale(frame: pd.DataFrame) -> List[float]:
    return frame.groupby("scale")["ratio"].max().reindex(SCALES).fillna(0.0).tolist()


def check_suti(family: StressFamily, a: float, b: float, s: float, trend_tol: float = DEFAULT_TREND_TOLERANCE, threads: int = 1) -> InequalityReport:
    """
    ``E X^s <= 1 + D (int_0^inf P(X^b > y)^a dy)^(1/a)`` for nonnegative ``X``.

    The ratio ``(E X^s - 1)_+ / RHS`` is the empirical ``D``.  The check
    passes when the largest ratio does not grow along the scale ladder
    ``X -> cX``, ``c = 1, 2, ..., 2^10``.

    Raises
    ------
    DomainError
        Unless ``b / (s a) > 1``.
    """
    if min(a, b, s) <= 0 or not b / (s * a) > 1:
        raise DomainError(f"Need positive a, b, s with b/(s a) > 1, got a={a}, b={b}, s={s}")

    def evaluate(item):
        index, member = item
        rows = []
        for c in SCALES:
            values = c * member.values
            lhs = max(float(np.dot(member.probs, values**s)) - 1.0, 0.0)
            rhs = _power_integral(values, member.probs, b, a) ** (1.0 / a)
            ratio = lhs / rhs if rhs > 0 else 0.0
            rows.append({"member": index, "scale": c, "lhs": lhs, "rhs": rhs, "ratio": ratio})
        return rows

    frame = pd.DataFrame([row for rows in parallel_map(evaluate, list(enumerate(family.members())), threads=threads) for row in rows])
    by_scale = _by_scale(frame)
    trend = trend_slope(by_scale)
    constant = float(frame["ratio"].max())
    return InequalityReport(
        lemma="suti",
        members=frame,
        constants={"D": constant},
        max_ratio=constant,
        max_ratio_by_scale=by_scale,
        trend=trend,
        passed=bool(np.isfinite(constant) and trend <= trend_tol),
        parameters={"a": a, "b": b, "s": s},
    )


def _affine_constants(lhs: np.ndarray, rhs: np.ndarray, power: float = 1.0) -> Tuple[float, float]:
    """
    Smallest ``(C1, C2)`` in the greedy sense with ``lhs <= C1 + C2 rhs^power``:
    ``C1`` covers every member whose right side is at most 1, ``C2`` the rest.
    """
    small = rhs <= 1.0
    c1 = float(lhs[small].max()) if np.any(small) else 0.0
    large = ~small
    if not np.any(large):
        return c1, 0.0
    c2 = float(np.max(np.maximum(lhs[large] - c1, 0.0) / rhs[large] ** power))
    return c1, c2


def check_moz2(family: StressFamily, a: float, b: float, s: float, trend_tol: float = DEFAULT_TREND_TOLERANCE, threads: int = 1) -> InequalityReport:
    """
    ``int P(X^a > y)^s dy <= R1 + R2 (int P(X^b > y)^s dy)^zeta`` with ``zeta < 1``.

    ``zeta`` is the largest per-member log-log slope of the left side
    against the right side along the scale ladder.  Passes when
    ``zeta <= 1 - 0.01`` and the largest ``lhs / rhs^zeta`` does not grow
    along the ladder.

    Raises
    ------
    DomainError
        Unless ``s < a < b`` and ``s <= 1``.
    """
    if not (0 < s < a < b and s <= 1):
        raise DomainError(f"Need 0 < s < a < b and s <= 1, got a={a}, b={b}, s={s}")

    def evaluate(item):
        index, member = item
        lhs = np.array([_power_integral(c * member.values, member.probs, a, s) for c in SCALES])
        rhs = np.array([_power_integral(c * member.values, member.probs, b, s) for c in SCALES])
        slope, residual = log_log_slope(rhs, lhs)
        return index, lhs, rhs, slope, residual

    outcomes = parallel_map(evaluate, list(enumerate(family.members())), threads=threads)
    fitted = [o for o in outcomes if np.any(o[2] > 0)]
    if fitted:
        worst = max(fitted, key=lambda o: (o[3], -o[0]))
        zeta, residual = worst[3], worst[4]
    else:
        zeta, residual = 0.0, 0.0

    rows = []
    for index, lhs, rhs, _, _ in outcomes:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs / rhs**zeta, 0.0)
        rows.extend({"member": index, "scale": c, "lhs": l_, "rhs": r_, "ratio": q_} for c, l_, r_, q_ in zip(SCALES, lhs, rhs, ratio))
    frame = pd.DataFrame(rows)
    r1, r2 = _affine_constants(frame["lhs"].to_numpy(), frame["rhs"].to_numpy(), zeta)
    by_scale = _by_scale(frame)
    trend = trend_slope(by_scale)
    return InequalityReport(
        lemma="moz2",
        members=frame,
        constants={"R1": r1, "R2": r2},
        max_ratio=float(frame["ratio"].max()),
        max_ratio_by_scale=by_scale,
        trend=trend,
        passed=bool(zeta <= 1.0 - ZETA_MARGIN and trend <= trend_tol and np.isfinite(r2)),
        exponent=zeta,
        exponent_residual=residual,
        parameters={"a": a, "b": b, "s": s},
    )


def _eta_grid(low: float, high: float, points: int = ETA_GRID_POINTS) -> np.ndarray:
    return low + (high - low) * np.arange(1, points + 1) / (points + 1)


def check_moz1(
    family: StressFamily,
    density: MartingaleDensity,
    alpha: float,
    beta: float,
    gamma: float,
    delta: float,
    m: Optional[float] = None,
    stability_tol: float = 1.0,
    threads: int = 1,
) -> InequalityReport:
    """
    ``int P((X_+)^alpha > y)^gamma dy <= L1 + L2 int P((X_-)^eta > y)^delta dy``
    over laws with ``E_Q X = m``.

    Members live on the leaves of the density's tree (``P`` and ``Q`` are its
    leaf measures) and are pushed along ``X -> m + c (X - m)``, which keeps
    the ``Q``-mean.  ``eta`` is searched on 64 interior points of
    ``(max(alpha, delta), beta)``, refined once around the best cell, and
    chosen to minimize ``L2``.  Passes when ``L2`` over the full family is
    at most ``1 + stability_tol`` times ``L2`` over its first half.

    Raises
    ------
    DomainError
        Unless ``alpha < beta`` and ``alpha/gamma < 1 < beta/delta``, or when
        the ``eta`` interval is empty.
    """
    if not (alpha < beta and alpha / gamma < 1 < beta / delta):
        raise DomainError(f"Need alpha < beta and alpha/gamma < 1 < beta/delta, got {(alpha, beta, gamma, delta)}")
    low = max(alpha, delta)
    if not low < beta:
        raise DomainError(f"Empty eta interval ({low}, {beta})")
    if m is not None:
        family = StressFamily(**{**family.__dict__, "m": m})
    mean = 0.0 if family.m is None else float(family.m)
    p = density.leaf_prob
    q = density.q_leaf
    members = family.leaf_members(density)
    for x in members:
        if abs(float(np.dot(q, x)) - mean) > 1e-10 * max(1.0, abs(mean), float(np.max(np.abs(x)))):
            raise DomainError("Family member violates the Q-mean constraint")

    scaled = [(index, c, mean + c * (x - mean)) for index, x in enumerate(members) for c in SCALES]

    def positive_side(item):
        return _power_integral(item[2], p, alpha, gamma)

    lhs = np.array(parallel_map(positive_side, scaled, threads=threads))
    member_index = np.array([s[0] for s in scaled])
    half = member_index < max(1, len(members) // 2)

    def negative_side(eta):
        return np.array([_power_integral(-x, p, eta, delta) for _, _, x in scaled])

    def constants(eta, mask=None):
        rhs = negative_side(eta)
        if mask is not None:
            return _affine_constants(lhs[mask], rhs[mask])
        return _affine_constants(lhs, rhs)

    def search(grid):
        scores = [constants(eta)[1] for eta in grid]
        best = int(np.argmin(scores))
        return best, scores

    grid = _eta_grid(low, beta)
    best, _ = search(grid)
    left = grid[best - 1] if best > 0 else low
    right = grid[best + 1] if best + 1 < grid.size else beta
    refined = _eta_grid(left, right)
    fine_best, fine_scores = search(refined)
    eta = float(refined[fine_best])

    rhs = negative_side(eta)
    l1, l2 = _affine_constants(lhs, rhs)
    _, l2_half = constants(eta, half)
    inside = low < eta < beta
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, np.maximum(lhs - l1, 0.0) / rhs, 0.0)
    frame = pd.DataFrame({"member": member_index, "scale": [s[1] for s in scaled], "lhs": lhs, "rhs": rhs, "ratio": ratio})
    by_scale = _by_scale(frame)
    stable = l2 <= (1.0 + stability_tol) * l2_half + 1e-12
    logger.debug("moz1: eta=%.6f L1=%.6g L2=%.6g (half family %.6g)", eta, l1, l2, l2_half)
    return InequalityReport(
        lemma="moz1",
        members=frame,
        constants={"L1": l1, "L2": l2, "L2_half": l2_half},
        max_ratio=float(frame["ratio"].max()),
        max_ratio_by_scale=by_scale,
        trend=trend_slope(by_scale),
        passed=bool(inside and np.isfinite(l1) and np.isfinite(l2) and stable),
        exponent=eta,
        exponent_residual=float(fine_scores[fine_best]),
        inconclusive=not inside,
        parameters={"alpha": alpha, "beta": beta, "gamma": gamma, "delta": delta, "m": mean},
    )
