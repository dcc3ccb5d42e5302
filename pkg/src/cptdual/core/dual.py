"""
Equivalent martingale measure from a utility maximization, and moment
diagnostics under it.

The utility

    U(x) = x - 1/2           for x >= 0
    U(x) = -(x - 1)^2 / 2    for x < 0

is concave, C^1 with ``U' >= 1``.  Maximizing ``E_P[U(X_T^0(phi))]`` over
strategies and normalizing ``U'`` at the optimum gives a density
``rho = dQ/dP`` under which prices are martingales: the first-order
condition in the block of node ``nu`` is ``E_P[U'(X*) dS 1_nu] = 0``.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from cptdual.core.arbitrage import NaCertificate, check_robust_na
from cptdual.core.errors import ArbitrageError, ConvergenceError, DomainError
from cptdual.core.market import ScenarioTree, Strategy, wealth

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_ITER = 500
MARTINGALE_TOLERANCE = 1e-8

_ARMIJO = 1e-4
_MAX_BACKTRACK = 60
_MAX_EXPANSION = 40


class UtilityU:
    """The piecewise utility used to build the martingale measure."""

    @staticmethod
    def value(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, x - 0.5, -0.5 * (x - 1.0) ** 2)

    @staticmethod
    def derivative(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, 1.0, 1.0 - x)

    @staticmethod
    def second_derivative(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, 0.0, -1.0)


@dataclass
class MartingaleDensity:
    """
    Density ``rho = dQ/dP`` on the leaves with its conditional process.

    Attributes
    ----------
    rho : np.ndarray
        Per-leaf density, ``sum(leaf_prob * rho) == 1``
    rho_t : np.ndarray
        Per-node ``E_P[rho | node]``; 1 at the root
    phi_star : Strategy
        The maximizer that produced ``rho``
    leaf_prob : np.ndarray
        ``P`` of every leaf
    q_branch : np.ndarray
        Per-node ``Q(node | parent)``; 1 at the root
    """

    rho: np.ndarray
    rho_t: np.ndarray
    phi_star: Strategy
    leaf_prob: np.ndarray
    q_branch: np.ndarray
    iterations: int = 0
    gradient_norm: float = 0.0
    objective: float = float("nan")
    trace: List[Dict[str, float]] = field(default_factory=list)

    @property
    def q_leaf(self) -> np.ndarray:
        return self.leaf_prob * self.rho

    def to_frame(self, tree: ScenarioTree) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "leaf": tree.leaves,
                "p": self.leaf_prob,
                "rho": self.rho,
                "q": self.q_leaf,
            }
        )

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.trace, columns=["iteration", "objective", "gradient_norm", "step"])

    def to_summary(self, tree: ScenarioTree) -> dict:
        return {
            "rho": self.rho.tolist(),
            "rho_min": float(self.rho.min()),
            "rho_max": float(self.rho.max()),
            "q_branch": {str(int(node)): float(self.q_branch[node]) for node in range(1, tree.n_nodes)},
            "phi_star": self.phi_star.values.tolist(),
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "objective": self.objective,
        }

    @classmethod
    def from_rho(cls, tree: ScenarioTree, rho, phi_star: Optional[Strategy] = None) -> "MartingaleDensity":
        """Build the conditional process and branch probabilities of a leaf density."""
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (tree.n_leaves,):
            raise DomainError(f"Density has {rho.size} atoms, tree has {tree.n_leaves} leaves")
        if np.any(rho <= 0):
            raise DomainError("Density must be strictly positive")
        q_mass = tree.node_sums(tree.leaf_prob * rho)
        rho_t = q_mass / tree.path_prob
        q_branch = np.ones(tree.n_nodes)
        q_branch[1:] = q_mass[1:] / q_mass[tree.parent[1:]]
        return cls(
            rho=rho,
            rho_t=rho_t,
            phi_star=phi_star if phi_star is not None else Strategy.zeros(tree),
            leaf_prob=tree.leaf_prob.copy(),
            q_branch=q_branch,
        )


def _objective(A: np.ndarray, p: np.ndarray, phi: np.ndarray) -> float:
    return float(np.dot(p, UtilityU.value(A @ phi)))


def _direction(A: np.ndarray, p: np.ndarray, phi: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    """Newton step on the curved subspace plus a gradient step on the flat one."""
    x = A @ phi
    curvature = A.T @ (A * (p * -UtilityU.second_derivative(x))[:, None])
    eigvals, eigvecs = np.linalg.eigh(curvature)
    cutoff = max(eigvals.max(initial=0.0), 1.0) * 1e-12
    curved = eigvals > cutoff
    coords = eigvecs.T @ gradient
    step = eigvecs[:, curved] @ (coords[curved] / eigvals[curved])
    step += eigvecs[:, ~curved] @ coords[~curved]
    return step


def construct_q(
    tree: ScenarioTree,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    certificate: Optional[NaCertificate] = None,
) -> MartingaleDensity:
    """
    Construct an equivalent martingale measure by maximizing ``E_P[U(X_T^0(phi))]``.

    Damped Newton with Armijo backtracking from ``phi = 0``.  ``U`` is linear
    on the gains side, so the Hessian can be singular; on its null space the
    step falls back to the gradient (with step expansion, since the objective
    is linear there).

    Parameters
    ----------
    tree : ScenarioTree
    tol : float
        Stop when the sup-norm of the gradient is at most ``tol`` and the
        martingale residual is at most :data:`MARTINGALE_TOLERANCE`
    max_iter : int
        Newton iterations before giving up
    certificate : NaCertificate, optional
        Precomputed no-arbitrage certificate; computed when omitted

    Raises
    ------
    ArbitrageError
        When the no-arbitrage certificate fails.
    ConvergenceError
        When ``max_iter`` iterations do not reach both tolerances.
    """
    if certificate is None:
        certificate = check_robust_na(tree)
    if not certificate.passed:
        raise ArbitrageError(f"Market admits an arbitrage at {certificate.failure.describe()}", certificate)

    A = tree.design_matrix
    p = tree.leaf_prob
    phi = np.zeros(tree.strategy_dim)
    value = _objective(A, p, phi)
    trace = []
    gradient_norm = np.inf
    residual = np.inf
    density = None
    iteration = 0
    for iteration in range(max_iter + 1):
        gradient = A.T @ (p * UtilityU.derivative(A @ phi))
        gradient_norm = float(np.max(np.abs(gradient), initial=0.0))
        trace.append({"iteration": iteration, "objective": value, "gradient_norm": gradient_norm, "step": 0.0})
        if gradient_norm <= tol:
            density = _density(tree, A, p, phi)
            residual = verify_martingale(tree, density)
            if residual <= MARTINGALE_TOLERANCE:
                break
            logger.debug("Gradient %.3e is below tolerance but the martingale residual is %.3e", gradient_norm, residual)
        if iteration == max_iter:
            raise ConvergenceError(
                f"Martingale measure construction stopped after {max_iter} iterations with gradient norm {gradient_norm:.3e}"
                f" and martingale residual {residual:.3e}",
                gradient_norm=gradient_norm,
                iterations=iteration,
            )
        direction = _direction(A, p, phi, gradient)
        slope = float(np.dot(gradient, direction))
        step = 1.0
        for _ in range(_MAX_BACKTRACK):
            candidate = _objective(A, p, phi + step * direction)
            if candidate >= value + _ARMIJO * step * slope:
                break
            step *= 0.5
        else:
            logger.warning("Line search stalled at gradient norm %.3e", gradient_norm)
            raise ConvergenceError(f"Line search failed with gradient norm {gradient_norm:.3e}", gradient_norm=gradient_norm, iterations=iteration)
        if step == 1.0:
            for _ in range(_MAX_EXPANSION):
                longer = _objective(A, p, phi + 2.0 * step * direction)
                if longer <= candidate:
                    break
                step, candidate = 2.0 * step, longer
        phi = phi + step * direction
        value = candidate
        trace[-1]["step"] = step
        logger.debug("construct_q iteration %d: objective %.12g, gradient %.3e, step %.3g", iteration, value, gradient_norm, step)

    density.iterations = iteration
    density.gradient_norm = gradient_norm
    density.objective = value
    density.trace = trace
    logger.debug("construct_q converged in %d iterations, martingale residual %.3e", iteration, residual)
    return density


def _density(tree: ScenarioTree, A: np.ndarray, p: np.ndarray, phi: np.ndarray) -> MartingaleDensity:
    marginal = UtilityU.derivative(A @ phi)
    rho = marginal / float(np.dot(p, marginal))
    return MartingaleDensity.from_rho(tree, rho, Strategy.from_vector(tree, phi))


def verify_martingale(tree: ScenarioTree, density: MartingaleDensity) -> float:
    """Largest ``|E_Q[dS | node]|`` over information nodes and assets."""
    if density.rho.shape != (tree.n_leaves,):
        raise DomainError(f"Density has {density.rho.size} atoms, tree has {tree.n_leaves} leaves")
    drift = np.zeros((tree.n_nodes, tree.d))
    nodes = np.arange(1, tree.n_nodes)
    np.add.at(drift, tree.parent[nodes], density.q_branch[nodes, None] * tree.increments[nodes])
    return float(np.max(np.abs(drift[tree.internal]), initial=0.0))


@dataclass
class MomentReport:
    """Exact moments of a wealth process under ``Q``."""

    z: float
    pi: float
    xi: float
    negative_terminal_moment: float
    positive_terminal_mean: float
    negative_running_moment: float
    abs_wealth: np.ndarray
    theta_moment: np.ndarray
    positive_gain: np.ndarray
    wealth_mean: np.ndarray
    martingale_residual: float
    martingale_ok: bool
    remark_holds: bool
    positive_part_ok: bool

    def to_frame(self) -> pd.DataFrame:
        """Per-period table; ``t = 0`` has no holdings."""
        T = self.theta_moment.size
        return pd.DataFrame(
            {
                "t": np.arange(T + 1),
                "E_Q|X_t|": self.abs_wealth,
                "E_Q X_t": self.wealth_mean,
                "E_Q|theta_t|^xi": np.r_[np.nan, self.theta_moment],
                "E_Q(theta_t.dS_t)+": np.r_[np.nan, self.positive_gain],
            }
        )

    def to_summary(self) -> dict:
        return {
            "z": self.z,
            "pi": self.pi,
            "xi": self.xi,
            "E_Q[(X_T)-^pi]": self.negative_terminal_moment,
            "E_Q[(X_T)+]": self.positive_terminal_mean,
            "E_Q[sup_t (X_t)-^pi]": self.negative_running_moment,
            "E_Q|X_t|": self.abs_wealth.tolist(),
            "E_Q|theta_t|^xi": self.theta_moment.tolist(),
            "E_Q[(theta_t.dS_t)+]": self.positive_gain.tolist(),
            "E_Q[X_t]": self.wealth_mean.tolist(),
            "martingale_residual": self.martingale_residual,
            "martingale_ok": self.martingale_ok,
            "remark_holds": self.remark_holds,
            "positive_part_ok": self.positive_part_ok,
        }


def _holdings_along_paths(tree: ScenarioTree, theta: Strategy) -> np.ndarray:
    """``theta_t`` seen by every leaf path, shape ``(n_leaves, T, d)``."""
    ancestors = tree.paths[:, :-1]
    return theta.values[tree.internal_index[ancestors]]


def moment_diagnostics(tree: ScenarioTree, density: MartingaleDensity, z: float, theta, pi: float, xi: float = 0.5) -> MomentReport:
    """
    Moments of ``X^z(theta)`` under ``Q``, all exact finite sums.

    Besides the moments, checks the martingale-transform identity
    ``E_Q[X_t] = z``, the pointwise bound
    ``(theta_t . dS_t)_+ <= (X_t)_+ + (X_{t-1})_-`` on every atom and period,
    and ``E_Q[(X_T)_+] <= |z| + E_Q[(X_T)_-]``.

    Raises
    ------
    DomainError
        If ``pi <= 1`` or ``xi`` is outside (0, 1).
    """
    if not pi > 1:
        raise DomainError(f"pi must exceed 1, got {pi}")
    if not (0 < xi < 1):
        raise DomainError(f"xi must lie in (0, 1), got {xi}")
    if not isinstance(theta, Strategy):
        theta = Strategy.from_nested(tree, theta)
    process = wealth(tree, z, theta)
    q = density.q_leaf
    paths = process.paths()
    gains = np.diff(paths, axis=1)
    terminal = paths[:, -1]
    negative = np.maximum(-paths, 0.0)

    holdings = _holdings_along_paths(tree, theta)
    theta_norm = np.linalg.norm(holdings, axis=2)

    wealth_mean = q @ paths
    residual = float(np.max(np.abs(wealth_mean - z)))
    positive_terminal = float(q @ np.maximum(terminal, 0.0))
    negative_terminal = float(q @ np.maximum(-terminal, 0.0))
    remark_slack = 1e-12 * np.maximum(1.0, np.abs(paths[:, 1:]) + np.abs(paths[:, :-1]))
    remark_holds = bool(np.all(np.maximum(gains, 0.0) <= np.maximum(paths[:, 1:], 0.0) + negative[:, :-1] + remark_slack))

    return MomentReport(
        z=float(z),
        pi=float(pi),
        xi=float(xi),
        negative_terminal_moment=float(q @ np.maximum(-terminal, 0.0) ** pi),
        positive_terminal_mean=positive_terminal,
        negative_running_moment=float(q @ negative.max(axis=1) ** pi),
        abs_wealth=q @ np.abs(paths),
        theta_moment=q @ theta_norm**xi,
        positive_gain=q @ np.maximum(gains, 0.0),
        wealth_mean=wealth_mean,
        martingale_residual=residual,
        martingale_ok=residual <= MARTINGALE_TOLERANCE,
        remark_holds=remark_holds,
        positive_part_ok=positive_terminal <= abs(z) + negative_terminal + MARTINGALE_TOLERANCE,
    )


def theta_moment_bound(
    tree: ScenarioTree,
    density: MartingaleDensity,
    certificate: NaCertificate,
    theta,
    t: int,
) -> Tuple[float, float]:
    """
    Both sides of

        E_Q|theta_t|^(1/2) <= sqrt(E_Q[(theta_t . dS_t)_+]
                                   * E_Q[rho_{t-1} / (kappa_{t-1} beta_{t-1}^2) * E_P[1/rho_t | F_{t-1}]])

    At every node the robust no-arbitrage bound gives
    ``E_Q[(theta . dS)_+ | node] >= kappa |theta| beta^2 / (rho_{t-1} E_P[1/rho_t | node])``;
    Cauchy-Schwarz under ``Q`` turns that into the displayed inequality.

    For a grid certificate (several assets) the ``beta`` used at a node is
    the smaller of the certified value and the exact conditional
    probability that ``theta`` gains at least ``kappa |theta|``, so the
    bound holds for directions the grid did not probe.

    Returns
    -------
    lhs, rhs : float
    """
    if not (1 <= t <= tree.T):
        raise DomainError(f"t must lie in 1..{tree.T}, got {t}")
    if not certificate.passed:
        raise ArbitrageError("The moment bound needs a passing no-arbitrage certificate", certificate)
    theta = theta if isinstance(theta, Strategy) else Strategy.from_nested(tree, theta)
    theta.check(tree)
    q = density.q_leaf

    nodes = tree.nodes_at_depth(t - 1)
    rows = tree.internal_index[nodes]
    holdings = theta.values[rows]
    norms = np.linalg.norm(holdings, axis=1)
    kappa = certificate.kappa[rows]
    beta = certificate.beta[rows].copy()

    inverse_rho = np.zeros(nodes.size)
    positive_gain = np.zeros(nodes.size)
    for k, node in enumerate(nodes):
        kids = tree.children[node]
        inverse_rho[k] = np.dot(tree.cond_prob[kids], 1.0 / density.rho_t[kids])
        gain = tree.increments[kids] @ holdings[k]
        positive_gain[k] = np.dot(density.q_branch[kids], np.maximum(gain, 0.0))
        if not certificate.exact and norms[k] > 0:
            hit = gain >= kappa[k] * norms[k] - 1e-12 * norms[k]
            beta[k] = min(beta[k], float(np.dot(tree.cond_prob[kids], hit)))

    node_q = tree.node_sums(q)[nodes]
    lhs = float(np.dot(node_q, np.sqrt(norms)))
    mean_gain = float(np.dot(node_q, positive_gain))
    with np.errstate(divide="ignore"):
        constant = density.rho_t[nodes] / (kappa * beta**2) * inverse_rho
    with np.errstate(invalid="ignore"):
        rhs = float(np.sqrt(mean_gain * float(np.dot(node_q, constant))))
    if np.isnan(rhs):
        rhs = np.inf
    return lhs, rhs


def admissible_pi_range(beta: float, delta: float, r: float) -> Optional[Tuple[float, float]]:
    """
    Open interval ``(1, min(beta/delta, 1 + r/2))`` of admissible moment
    exponents, or ``None`` when ``beta/delta <= 1`` leaves no room.

    Raises
    ------
    DomainError
        For non-positive inputs.
    """
    if min(beta, delta, r) <= 0:
        raise DomainError("beta, delta and r must be positive")
    upper = min(beta / delta, 1.0 + r / 2.0)
    if upper <= 1.0:
        return None
    return 1.0, upper
