"""
Well-posedness gate: a parameter classifier and an empirical leverage probe.
"""
import logging
import math
import numbers
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from cptdual.core.arbitrage import NaCertificate, check_robust_na
from cptdual.core.cpt import CptSpec, choquet_minus, choquet_plus, log_choquet_minus, log_choquet_plus
from cptdual.core.errors import ArbitrageError, ConfigurationError, DomainError
from cptdual.core.market import ScenarioTree, Strategy, terminal_distribution
from cptdual.util.parallel import parallel_map
from cptdual.util.rng import make_rng

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 5
DEFAULT_DIVERGENCE_BOUND = 1e12
DEFAULT_RANDOM_DIRECTIONS = 8
BENCHMARK_MODES = ("Ba", "Bb")


class Verdict(Enum):
    WellPosedA = "WellPosedA"
    WellPosedB = "WellPosedB"
    IllPosedNecessary = "IllPosedNecessary"
    Indeterminate = "Indeterminate"

    @property
    def well_posed(self) -> bool:
        return self in (Verdict.WellPosedA, Verdict.WellPosedB)


@dataclass
class ParameterVerdict:
    """
    Classification of ``(alpha, beta, gamma, delta)``.

    ``benchmark`` is the benchmark assumption the well-posedness result
    needs (``Ba``: B has a moment of order above one; ``Bb``: B dominates a
    replicable payoff).  On finite trees both always hold, so
    ``benchmark_compatible`` only records whether the requested mode is the
    one the verdict pairs with.
    """

    tag: Verdict
    witness: str
    alpha: float
    beta: float
    gamma: float
    delta: float
    benchmark_mode: str
    benchmark: Optional[str] = None
    note: Optional[str] = None

    @property
    def benchmark_compatible(self) -> bool:
        return self.benchmark is None or self.benchmark == self.benchmark_mode

    def to_summary(self) -> dict:
        return {
            "tag": self.tag.value,
            "witness": self.witness,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "delta": self.delta,
            "benchmark_mode": self.benchmark_mode,
            "benchmark": self.benchmark,
            "benchmark_compatible": self.benchmark_compatible,
            "note": self.note,
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{k: v for k, v in self.to_summary().items() if k not in ("alpha", "beta", "gamma", "delta")}])


def assumption_a(alpha: float, beta: float, gamma: float, delta: float) -> bool:
    return alpha < beta and alpha / gamma < 1 < beta / delta


def assumption_b(alpha: float, beta: float, gamma: float, delta: float) -> bool:
    return delta <= 1 and alpha < beta and alpha / gamma < beta


def necessary_conditions_fail(alpha: float, beta: float, gamma: float, delta: float) -> bool:
    return alpha >= beta or alpha / gamma > beta / delta


def classify(alpha: float, beta: float, gamma: float, delta: float, benchmark_mode: str = "Ba") -> ParameterVerdict:
    """
    Classify CPT exponents.

    WellPosedA
        ``alpha < beta`` and ``alpha/gamma < 1 < beta/delta``
    WellPosedB
        ``delta <= 1``, ``alpha < beta`` and ``alpha/gamma < beta``
    IllPosedNecessary
        ``alpha >= beta`` or ``alpha/gamma > beta/delta``
    Indeterminate
        anything else (necessary conditions hold, neither sufficient one does)

    Raises
    ------
    DomainError
        For non-positive parameters or an unknown benchmark mode.
    """
    params = dict(alpha=alpha, beta=beta, gamma=gamma, delta=delta)
    for key, value in params.items():
        if isinstance(value, bool) or not (isinstance(value, numbers.Real) and math.isfinite(value) and value > 0):
            raise DomainError(f"{key} must be strictly positive, got {value!r}")
    if benchmark_mode not in BENCHMARK_MODES:
        raise DomainError(f"benchmark_mode must be one of {BENCHMARK_MODES}, got {benchmark_mode!r}")

    a, b = alpha / gamma, beta / delta
    in_a = assumption_a(alpha, beta, gamma, delta)
    in_b = assumption_b(alpha, beta, gamma, delta)
    if in_a:
        witness = f"alpha<beta ({alpha:g}<{beta:g}) and alpha/gamma<1<beta/delta ({a:.4g}<1<{b:.4g})"
        note = "assumption b holds as well; either well-posedness result applies" if in_b else None
        verdict = ParameterVerdict(Verdict.WellPosedA, witness, benchmark="Ba", note=note, benchmark_mode=benchmark_mode, **params)
    elif in_b:
        witness = f"delta<=1 ({delta:g}), alpha<beta ({alpha:g}<{beta:g}) and alpha/gamma<beta ({a:.4g}<{beta:g})"
        verdict = ParameterVerdict(Verdict.WellPosedB, witness, benchmark="Bb", benchmark_mode=benchmark_mode, **params)
    elif necessary_conditions_fail(alpha, beta, gamma, delta):
        if alpha >= beta:
            witness = f"alpha>=beta ({alpha:g}>={beta:g})"
        else:
            witness = f"alpha/gamma>beta/delta ({a:.4g}>{b:.4g})"
        verdict = ParameterVerdict(Verdict.IllPosedNecessary, witness, benchmark_mode=benchmark_mode, **params)
    else:
        witness = f"necessary conditions hold (alpha<beta, alpha/gamma={a:.4g}<=beta/delta={b:.4g}) but neither sufficient assumption does"
        verdict = ParameterVerdict(Verdict.Indeterminate, witness, benchmark_mode=benchmark_mode, **params)
    logger.debug("classify%s -> %s", (alpha, beta, gamma, delta), verdict.tag.value)
    return verdict


def benchmark_moment(tree: ScenarioTree, r: float) -> float:
    """``E_P|B|^(1 + r)``; always finite on a tree."""
    if r <= 0:
        raise DomainError("r must be positive")
    return float(np.dot(tree.leaf_prob, np.abs(tree.benchmark) ** (1.0 + r)))


@dataclass
class RayResult:
    direction_id: int
    direction: Strategy
    lambdas: np.ndarray
    v_plus: np.ndarray
    v_minus: np.ndarray
    v: np.ndarray
    slope_plus: float
    slope_minus: float
    net_slope: float
    divergent: bool
    bounded: bool
    overflowed: int = 0


@dataclass
class RayProbeReport:
    """Values of ``V(z, lambda * theta)`` along every probed ray."""

    rays: List[RayResult]
    window: int
    divergence_bound: float
    certificate: Optional[NaCertificate] = field(default=None, repr=False)

    @property
    def divergent(self) -> bool:
        return any(r.divergent for r in self.rays)

    @property
    def certified_bounded(self) -> bool:
        return all(r.bounded for r in self.rays)

    @property
    def net_slope(self) -> float:
        """Largest net slope among divergent rays (among all rays if none diverges)."""
        pool = [r for r in self.rays if r.divergent] or self.rays
        slopes = [r.net_slope for r in pool if not math.isnan(r.net_slope)]
        return max(slopes) if slopes else math.nan

    @property
    def max_value(self) -> float:
        """Largest evaluated ``V``; overflowed points are skipped."""
        values = np.concatenate([r.v for r in self.rays])
        values = values[~np.isnan(values)]
        return float(values.max()) if values.size else math.nan

    def to_frame(self) -> pd.DataFrame:
        frames = [
            pd.DataFrame({"direction_id": r.direction_id, "lambda": r.lambdas, "V_plus": r.v_plus, "V_minus": r.v_minus, "V": r.v}) for r in self.rays
        ]
        return pd.concat(frames, ignore_index=True)

    def slopes_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "direction_id": r.direction_id,
                    "slope_plus": r.slope_plus,
                    "slope_minus": r.slope_minus,
                    "net_slope": r.net_slope,
                    "divergent": r.divergent,
                    "bounded": r.bounded,
                    "overflowed": r.overflowed,
                }
                for r in self.rays
            ]
        )

    def to_summary(self) -> dict:
        return {
            "divergent": self.divergent,
            "certified_bounded": self.certified_bounded,
            "net_slope": self.net_slope,
            "max_value": self.max_value,
            "window": self.window,
            "divergence_bound": self.divergence_bound,
            "rays": self.slopes_frame().to_dict(orient="records"),
        }


def default_directions(tree: ScenarioTree, seed: int = 0, random_directions: int = DEFAULT_RANDOM_DIRECTIONS) -> List[Strategy]:
    """Signed unit holdings in every asset at the first date, then seeded random unit strategies."""
    directions = []
    for asset in range(tree.d):
        directions.append(Strategy.unit(tree, asset, 1.0))
        directions.append(Strategy.unit(tree, asset, -1.0))
    rng = make_rng(seed, "probe", "directions")
    for _ in range(random_directions):
        vector = rng.standard_normal(tree.strategy_dim)
        directions.append(Strategy.from_vector(tree, vector / np.linalg.norm(vector)))
    return directions


def _difference(log_plus: float, log_minus: float) -> float:
    if log_plus == log_minus:
        return 0.0
    if log_plus > log_minus:
        return math.exp(log_plus) * -math.expm1(log_minus - log_plus) if log_plus < 709.0 else math.inf
    return -math.exp(log_minus) * -math.expm1(log_plus - log_minus) if log_minus < 709.0 else -math.inf


def _tail_slope(log_lambda: np.ndarray, log_values: np.ndarray) -> float:
    keep = np.isfinite(log_values)
    if np.count_nonzero(keep) < 2:
        return 0.0
    return float(np.polyfit(log_lambda[keep], log_values[keep], 1)[0])


def _probe_ray(tree, spec, z, direction_id, direction, lambdas, window, divergence_bound) -> RayResult:
    log_plus = np.empty(lambdas.size)
    log_minus = np.empty(lambdas.size)
    v = np.empty(lambdas.size)
    overflowed = np.zeros(lambdas.size, dtype=bool)
    for k, lam in enumerate(lambdas):
        dist = terminal_distribution(tree, z, direction * lam)
        if spec.has_log_utilities:
            log_plus[k] = log_choquet_plus(dist, spec)
            log_minus[k] = log_choquet_minus(dist, spec)
        else:
            # without log-utilities an overflowed u has no usable value
            with np.errstate(over="ignore", invalid="ignore"):
                plus, minus = choquet_plus(dist, spec), choquet_minus(dist, spec)
            if not (math.isfinite(plus) and math.isfinite(minus)):
                overflowed[k] = True
                log_plus[k] = log_minus[k] = v[k] = math.nan
                continue
            with np.errstate(divide="ignore"):
                log_plus[k], log_minus[k] = np.log(plus), np.log(minus)
        v[k] = _difference(log_plus[k], log_minus[k])

    with np.errstate(over="ignore"):
        v_plus, v_minus = np.exp(log_plus), np.exp(log_minus)
    tail = slice(lambdas.size - window - 1, lambdas.size)
    exceeded = bool(np.any(v[~overflowed] > divergence_bound))
    if overflowed[tail].any():
        # the tail is unresolved: only an evaluated value above the bound counts
        return RayResult(
            direction_id, direction, lambdas, v_plus, v_minus, v, math.nan, math.nan, math.nan, exceeded, False, overflowed=int(overflowed.sum())
        )

    log_lambda = np.log(lambdas[tail])
    slope_plus = _tail_slope(log_lambda, log_plus[tail])
    slope_minus = _tail_slope(log_lambda, log_minus[tail])
    if v[-1] > 0:
        net = slope_plus
    elif v[-1] < 0:
        net = -slope_minus
    else:
        net = 0.0
    tail_v = v[tail]
    increasing = bool(np.all(tail_v > 0) and np.all(np.diff(tail_v) > 0))
    divergent = exceeded or (increasing and net > 0)
    bounded = not divergent and bool(np.all(np.diff(tail_v) <= 0))
    return RayResult(direction_id, direction, lambdas, v_plus, v_minus, v, slope_plus, slope_minus, net, divergent, bounded, overflowed=int(overflowed.sum()))


def ray_probe(
    tree: ScenarioTree,
    spec: CptSpec,
    z: float,
    directions: Optional[Sequence[Strategy]] = None,
    lambdas=None,
    seed: int = 0,
    window: int = DEFAULT_WINDOW,
    divergence_bound: float = DEFAULT_DIVERGENCE_BOUND,
    random_directions: int = DEFAULT_RANDOM_DIRECTIONS,
    certificate: Optional[NaCertificate] = None,
    threads: int = 1,
) -> RayProbeReport:
    """
    Evaluate ``V(z, lambda * theta)`` along leverage rays.

    Slopes of ``log V_plus`` and ``log V_minus`` against ``log lambda`` are
    fitted over the last ``window`` doublings.  A ray is divergent when ``V``
    exceeds ``divergence_bound``, or when over that window ``V`` is
    positive, strictly increasing and the net slope (the slope of the
    dominating part, signed) is positive.  It is bounded when it is not
    divergent and ``V`` does not increase over the window, so no ray is both.
    This is evidence, never a proof.

    Specs with log-utilities are evaluated in the log domain, so large
    ``lambda`` never overflows.  For other specs an overflowed evaluation is
    recorded as NaN and counted in ``overflowed``; a ray whose window
    overflowed has no slopes, is never bounded and is divergent only when
    an evaluated ``V`` exceeded ``divergence_bound``.

    Raises
    ------
    ArbitrageError
        If the tree fails the no-arbitrage certificate.
    DomainError
        For a zero direction.
    """
    if certificate is None:
        certificate = check_robust_na(tree)
    if not certificate.passed:
        raise ArbitrageError(f"Ray probing needs an arbitrage-free tree: {certificate.failure.describe()}", certificate)
    lambdas = 2.0 ** np.arange(21) if lambdas is None else np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or np.any(lambdas <= 0) or np.any(np.diff(lambdas) <= 0):
        raise ConfigurationError("lambdas must be positive and strictly increasing")
    if window < 1 or lambdas.size < window + 1:
        raise ConfigurationError(f"Need at least {window + 1} lambdas for a window of {window}")
    if directions is None:
        directions = default_directions(tree, seed, random_directions)
    directions = [d if isinstance(d, Strategy) else Strategy.from_nested(tree, d) for d in directions]
    for k, direction in enumerate(directions):
        direction.check(tree)
        if direction.is_zero():
            raise DomainError(f"Direction {k} is zero")

    def task(item):
        k, direction = item
        return _probe_ray(tree, spec, z, k, direction, lambdas, window, divergence_bound)

    rays = parallel_map(task, list(enumerate(directions)), threads=threads)
    report = RayProbeReport(rays=rays, window=window, divergence_bound=divergence_bound, certificate=certificate)
    if report.divergent:
        logger.info("Ray probe: divergence on %d of %d rays, net slope %.4f", sum(r.divergent for r in rays), len(rays), report.net_slope)
    return report
