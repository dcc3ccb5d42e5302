"""
Cumulative prospect theory functionals on finite laws.

For a finite law the Choquet integral ``int_0^inf w(P(Y > y)) dy`` of a
nonnegative ``Y`` is a finite sum: with distinct values ``v_1 > ... > v_n``
and top-down cumulative probabilities ``P_k = P(Y >= v_k)``,

    sum_k (v_k - v_{k+1}) * w(P_k),    v_{n+1} = 0.

``P(Y > y)`` and ``P(Y >= y)`` differ only at the jump points, a null set
for the integral, so the ``>=`` cumulatives evaluated at the jumps give the
exact value of the ``>`` integrand.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from cptdual.core.distribution import DiscreteDistribution
from cptdual.core.errors import ConfigurationError, OracleDomainError, SpecificationError

logger = logging.getLogger(__name__)

Function = Callable[[np.ndarray], np.ndarray]

_MONOTONE_TOLERANCE = 1e-12
_BRUTE_CHUNK = 1 << 20


def power_utility(k: float, exponent: float) -> Function:
    def u(x):
        return k * np.power(np.asarray(x, dtype=float), exponent)

    return u


def power_log_utility(k: float, exponent: float) -> Function:
    """``log u`` as a function of ``log x`` for ``u(x) = k x^exponent``."""
    log_k = math.log(k)

    def log_u(log_x):
        return log_k + exponent * np.asarray(log_x, dtype=float)

    return log_u


def power_distortion(exponent: float) -> Function:
    def w(p):
        return np.power(np.asarray(p, dtype=float), exponent)

    return w


def tk_distortion(c: float) -> Function:
    """Inverse-S distortion ``p^c / (p^c + (1 - p)^c)^(1/c)``."""

    def w(p):
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        num = np.power(p, c)
        return num / np.power(num + np.power(1.0 - p, c), 1.0 / c)

    return w


@dataclass(frozen=True)
class CptSpec:
    """
    Utilities ``u_plus``, ``u_minus`` on [0, inf) and distortions ``w_plus``,
    ``w_minus`` on [0, 1], with the envelope constants

        u_plus(x) <= k_plus (x^alpha + 1)       w_plus(p) <= g_plus p^gamma
        u_minus(x) >= k_minus (x^beta - 1)      w_minus(p) >= g_minus p^delta

    All callables are vectorized over numpy arrays.  ``log_u_plus`` and
    ``log_u_minus`` (log-utility as a function of ``log x``) are optional and
    let evaluations survive overflow at extreme leverage.  ``continuous`` is
    declared, not inferred.
    """

    u_plus: Function
    u_minus: Function
    w_plus: Function
    w_minus: Function
    alpha: float
    beta: float
    gamma: float
    delta: float
    k_plus: float = 1.0
    k_minus: float = 1.0
    g_plus: float = 1.0
    g_minus: float = 1.0
    log_u_plus: Optional[Function] = None
    log_u_minus: Optional[Function] = None
    continuous: bool = True
    name: str = "custom"

    def __post_init__(self):
        for key in ("alpha", "beta", "gamma", "delta", "k_plus", "k_minus", "g_plus", "g_minus"):
            value = getattr(self, key)
            if not (np.isfinite(value) and value > 0):
                raise SpecificationError(f"{key} must be a positive number, got {value!r}")

    @classmethod
    def power(
        cls,
        alpha: float,
        beta: float,
        gamma: float,
        delta: float,
        k_plus: float = 1.0,
        k_minus: float = 1.0,
    ) -> "CptSpec":
        """Pure powers ``u_plus = k_plus x^alpha``, ``w_plus = p^gamma`` and likewise for losses."""
        return cls(
            u_plus=power_utility(k_plus, alpha),
            u_minus=power_utility(k_minus, beta),
            w_plus=power_distortion(gamma),
            w_minus=power_distortion(delta),
            alpha=alpha,
            beta=beta,
            gamma=gamma,
            delta=delta,
            k_plus=k_plus,
            k_minus=k_minus,
            log_u_plus=power_log_utility(k_plus, alpha),
            log_u_minus=power_log_utility(k_minus, beta),
            name="power",
        )

    @classmethod
    def linear(cls) -> "CptSpec":
        """Identity utilities and distortions: ``V`` is the plain expectation."""
        return replace(cls.power(1.0, 1.0, 1.0, 1.0), name="linear")

    @classmethod
    def tk92(cls, alpha: float = 0.88, beta: float = 0.88, loss_aversion: float = 2.25, gamma: float = 0.61, delta: float = 0.69) -> "CptSpec":
        """
        Power utilities with loss aversion and inverse-S distortions.

        Since ``p^c + (1 - p)^c`` lies in ``[1, 2^(1 - c)]`` for ``c <= 1``,
        the envelopes hold with ``g_plus = 1`` and ``g_minus = 2^(-(1 - delta)/delta)``.
        """
        if gamma > 1 or delta > 1:
            raise SpecificationError("Inverse-S distortion exponents must not exceed 1")
        return cls(
            u_plus=power_utility(1.0, alpha),
            u_minus=power_utility(loss_aversion, beta),
            w_plus=tk_distortion(gamma),
            w_minus=tk_distortion(delta),
            alpha=alpha,
            beta=beta,
            gamma=gamma,
            delta=delta,
            k_plus=1.0,
            k_minus=loss_aversion,
            g_plus=1.0,
            g_minus=2.0 ** (-(1.0 - delta) / delta),
            log_u_plus=power_log_utility(1.0, alpha),
            log_u_minus=power_log_utility(loss_aversion, beta),
            name="tk92",
        )

    @property
    def has_log_utilities(self) -> bool:
        return self.log_u_plus is not None and self.log_u_minus is not None

    @property
    def parameters(self) -> Tuple[float, float, float, float]:
        return self.alpha, self.beta, self.gamma, self.delta

    def validate(self, x_grid=None, p_grid=None, rtol: float = 1e-12) -> "CptSpec":
        """
        Check boundary values, monotone distortions and the four envelope
        inequalities on sample grids.

        Raises
        ------
        SpecificationError
            Naming the first violated requirement.
        """
        x = np.geomspace(1e-6, 1e6, 241) if x_grid is None else np.asarray(x_grid, dtype=float)
        p = np.linspace(0.0, 1.0, 201) if p_grid is None else np.asarray(p_grid, dtype=float)

        for label, value in (
            ("u_plus(0) = 0", self.u_plus(np.zeros(1))[0]),
            ("u_minus(0) = 0", self.u_minus(np.zeros(1))[0]),
            ("w_plus(0) = 0", self.w_plus(np.zeros(1))[0]),
            ("w_minus(0) = 0", self.w_minus(np.zeros(1))[0]),
        ):
            if abs(value) > rtol:
                raise SpecificationError(f"Boundary condition {label} fails: got {value!r}")
        for label, value in (("w_plus(1) = 1", self.w_plus(np.ones(1))[0]), ("w_minus(1) = 1", self.w_minus(np.ones(1))[0])):
            if abs(value - 1.0) > rtol:
                raise SpecificationError(f"Boundary condition {label} fails: got {value!r}")

        for label, w in (("w_plus", self.w_plus), ("w_minus", self.w_minus)):
            values = w(np.sort(p))
            if np.any(np.diff(values) < -_MONOTONE_TOLERANCE):
                raise SpecificationError(f"{label} is not nondecreasing on the sample grid")

        def slack(bound):
            return rtol * np.maximum(1.0, np.abs(bound))

        upper = self.k_plus * (np.power(x, self.alpha) + 1.0)
        if np.any(self.u_plus(x) > upper + slack(upper)):
            raise SpecificationError("Envelope u_plus(x) <= k_plus (x^alpha + 1) fails")
        lower = self.k_minus * (np.power(x, self.beta) - 1.0)
        if np.any(self.u_minus(x) < lower - slack(lower)):
            raise SpecificationError("Envelope u_minus(x) >= k_minus (x^beta - 1) fails")
        upper = self.g_plus * np.power(p, self.gamma)
        if np.any(self.w_plus(p) > upper + slack(upper)):
            raise SpecificationError("Envelope w_plus(p) <= g_plus p^gamma fails")
        lower = self.g_minus * np.power(p, self.delta)
        if np.any(self.w_minus(p) < lower - slack(lower)):
            raise SpecificationError("Envelope w_minus(p) >= g_minus p^delta fails")
        return self


PRESETS = {
    "power": CptSpec.power,
    "linear": CptSpec.linear,
    "tk92": CptSpec.tk92,
}


def preset(name: str, **kwargs) -> CptSpec:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"Unknown CPT preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**kwargs)


def _sorted_levels(levels: np.ndarray, probs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct levels in decreasing order with merged probabilities."""
    # sort on (level desc, prob asc) so ties are summed in a fixed order
    order = np.lexsort((probs, -levels))
    levels, probs = levels[order], probs[order]
    starts = np.flatnonzero(np.r_[True, levels[1:] != levels[:-1]])
    return levels[starts], np.add.reduceat(probs, starts)


def _cumulative(merged: np.ndarray) -> np.ndarray:
    cumulative = np.clip(np.cumsum(merged), 0.0, 1.0)
    if abs(cumulative[-1] - 1.0) <= 1e-12:
        cumulative[-1] = 1.0
    return cumulative


def _weights(w: Function, cumulative: np.ndarray) -> np.ndarray:
    weights = np.asarray(w(cumulative), dtype=float)
    if np.any(np.diff(weights) < -_MONOTONE_TOLERANCE):
        bad = int(np.argmax(np.diff(weights) < -_MONOTONE_TOLERANCE))
        raise SpecificationError(f"Distortion decreases between p={cumulative[bad]:.6g} and p={cumulative[bad + 1]:.6g}")
    return weights


def distorted_integral(levels, probs, w: Function) -> float:
    """
    ``int_0^inf w(P(Y > y)) dy`` for the nonnegative finite law ``Y`` with
    atoms ``(levels, probs)``, evaluated as the exact step sum.

    Raises
    ------
    SpecificationError
        If ``w`` is found decreasing at the evaluated cumulative probabilities.
    """
    levels = np.asarray(levels, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if np.any(levels < 0):
        raise ConfigurationError("Distorted integrals need nonnegative levels")
    values, merged = _sorted_levels(levels, probs)
    weights = _weights(w, _cumulative(merged))
    widths = values - np.r_[values[1:], 0.0]
    return float(np.dot(widths, weights))


def log_distorted_integral(log_levels, probs, w: Function) -> float:
    """
    Logarithm of :func:`distorted_integral` from the logarithms of the
    levels; ``-inf`` levels stand for zeros.  Returns ``-inf`` for a zero
    integral.
    """
    log_levels = np.asarray(log_levels, dtype=float)
    probs = np.asarray(probs, dtype=float)
    values, merged = _sorted_levels(log_levels, probs)
    weights = _weights(w, _cumulative(merged))
    positive = np.isfinite(values) & (weights > 0)
    if not np.any(positive):
        return -math.inf
    following = np.r_[values[1:], -math.inf]
    with np.errstate(divide="ignore", invalid="ignore"):
        # log(v_k - v_{k+1}) = log v_k + log(1 - exp(log v_{k+1} - log v_k))
        log_widths = values + np.log1p(-np.exp(following - values))
        terms = log_widths[positive] + np.log(weights[positive])
    return float(logsumexp(terms))


def _exp_or_inf(log_value: float) -> float:
    return math.inf if log_value > 709.0 else math.exp(log_value)


def _gain_levels(dist: DiscreteDistribution, u: Function) -> np.ndarray:
    return np.asarray(u(np.maximum(dist.values, 0.0)), dtype=float)


def _loss_levels(dist: DiscreteDistribution, u: Function) -> np.ndarray:
    return np.asarray(u(np.maximum(-dist.values, 0.0)), dtype=float)


def choquet_plus(dist: DiscreteDistribution, spec: CptSpec) -> float:
    """``V_plus(X) = int_0^inf w_plus(P(u_plus(X_+) > y)) dy``"""
    with np.errstate(over="ignore"):
        levels = _gain_levels(dist, spec.u_plus)
    if not np.all(np.isfinite(levels)) and spec.log_u_plus is not None:
        return _exp_or_inf(log_choquet_plus(dist, spec))
    return distorted_integral(levels, dist.probs, spec.w_plus)


def choquet_minus(dist: DiscreteDistribution, spec: CptSpec) -> float:
    """``V_minus(X) = int_0^inf w_minus(P(u_minus(X_-) > y)) dy``"""
    with np.errstate(over="ignore"):
        levels = _loss_levels(dist, spec.u_minus)
    if not np.all(np.isfinite(levels)) and spec.log_u_minus is not None:
        return _exp_or_inf(log_choquet_minus(dist, spec))
    return distorted_integral(levels, dist.probs, spec.w_minus)


def _log_parts(dist: DiscreteDistribution, sign: float, log_u: Function) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_x = np.log(np.maximum(sign * dist.values, 0.0))
    log_levels = np.where(np.isfinite(log_x), log_u(np.where(np.isfinite(log_x), log_x, 0.0)), -math.inf)
    return log_levels


def log_choquet_plus(dist: DiscreteDistribution, spec: CptSpec) -> float:
    """``log V_plus(X)``; needs ``spec.log_u_plus``."""
    if spec.log_u_plus is None:
        raise SpecificationError(f"Spec {spec.name!r} has no log-utility for gains")
    return log_distorted_integral(_log_parts(dist, 1.0, spec.log_u_plus), dist.probs, spec.w_plus)


def log_choquet_minus(dist: DiscreteDistribution, spec: CptSpec) -> float:
    """``log V_minus(X)``; needs ``spec.log_u_minus``."""
    if spec.log_u_minus is None:
        raise SpecificationError(f"Spec {spec.name!r} has no log-utility for losses")
    return log_distorted_integral(_log_parts(dist, -1.0, spec.log_u_minus), dist.probs, spec.w_minus)


def cpt_parts(dist: DiscreteDistribution, spec: CptSpec) -> Tuple[float, float, float]:
    """``(V, V_plus, V_minus)``"""
    v_plus = choquet_plus(dist, spec)
    v_minus = choquet_minus(dist, spec)
    return v_plus - v_minus, v_plus, v_minus


def cpt_value(dist: DiscreteDistribution, spec: CptSpec) -> float:
    """``V(X) = V_plus(X) - V_minus(X)``"""
    return cpt_parts(dist, spec)[0]


def choquet_brute(dist: DiscreteDistribution, u: Function, w: Function, step: float, cutoff: float) -> float:
    """
    Left-endpoint Riemann sum of ``y -> w(P(u(X_+) > y))`` over ``[0, cutoff]``.

    Independent of the step-sum evaluator: the survival probability is
    evaluated at every grid point.  The integrand is nonincreasing, so the
    sum overestimates by at most :func:`brute_error_bound`.

    Raises
    ------
    OracleDomainError
        If ``cutoff`` is below the largest ``u`` value.
    """
    if not step > 0:
        raise OracleDomainError("step must be positive")
    levels = _gain_levels(dist, u)
    top = float(levels.max())
    if cutoff < top:
        raise OracleDomainError(f"cutoff {cutoff} is below the largest utility value {top}")
    order = np.argsort(levels, kind="stable")
    ascending = levels[order]
    # survival[j] = P(level > y) when exactly j levels are <= y
    survival = np.r_[1.0, 1.0 - np.cumsum(dist.probs[order])]
    survival = np.clip(survival, 0.0, 1.0)
    survival[-1] = 0.0
    n_points = int(math.ceil(cutoff / step))
    counts = np.zeros(survival.size)
    for start in range(0, n_points, _BRUTE_CHUNK):
        y = np.arange(start, min(start + _BRUTE_CHUNK, n_points), dtype=float) * step
        counts += np.bincount(np.searchsorted(ascending, y, side="right"), minlength=survival.size)
    return float(step * np.dot(counts, np.asarray(w(survival), dtype=float)))


def brute_error_bound(dist: DiscreteDistribution, u: Function, w: Function, step: float) -> float:
    """``step * (number of jumps) * (largest jump of the integrand)``"""
    levels, merged = _sorted_levels(_gain_levels(dist, u), dist.probs)
    positive = levels > 0
    if not np.any(positive):
        return 0.0
    weights = np.r_[0.0, np.asarray(w(_cumulative(merged)), dtype=float)]
    jumps = np.diff(weights)[positive]
    return float(step * np.count_nonzero(positive) * jumps.max())
