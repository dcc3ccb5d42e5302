"""
Derivative-free maximization of the CPT objective over predictable strategies.

The objective ``theta -> V(X_T^z(theta) - B)`` is piecewise smooth with kinks
wherever two atoms tie or an atom changes sign, so a compass search with a
Hooke-Jeeves pattern move is used, restarted from several points.  Nothing
here claims global optimality.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from cptdual.core.arbitrage import NaCertificate, check_robust_na
from cptdual.core.cpt import CptSpec, cpt_parts
from cptdual.core.dual import MartingaleDensity, theta_moment_bound
from cptdual.core.errors import ConfigurationError, GateRefusal, SpecificationError
from cptdual.core.gate import BENCHMARK_MODES, classify
from cptdual.core.market import ScenarioTree, Strategy, terminal_distribution
from cptdual.util.parallel import parallel_map
from cptdual.util.rng import make_rng

logger = logging.getLogger(__name__)

BOUND_SLACK = 1e-10
RANDOMIZATION_NOTE = "search is over deterministic strategies only; randomized strategies are not explored"


@dataclass
class OptimizeConfig:
    """
    Settings of :func:`maximize_cpt`.

    Parameters
    ----------
    starts : int
        Number of starting points (zero strategy first)
    seed : int
        Seed of the random starting points
    initial_step, contraction, min_step : float
        Pattern step schedule: a block's step is multiplied by
        ``contraction`` after a sweep without improvement, and the search
        stops once every block step is below ``min_step``
    budget : int
        Objective evaluations shared evenly by the starts
    require_gate : bool
        Refuse parameters that are not classified well posed
    require_continuous : bool
        Refuse specs not declared continuous
    benchmark_mode : str
        Benchmark assumption passed to the classifier
    threads : int
        Starts evaluated concurrently
    progress : bool
        Show a progress bar over starts
    """

    starts: int = 8
    seed: int = 0
    initial_step: float = 1.0
    contraction: float = 0.5
    min_step: float = 1e-6
    budget: int = 20000
    require_gate: bool = False
    require_continuous: bool = True
    benchmark_mode: str = "Ba"
    threads: int = 1
    progress: bool = False

    def __post_init__(self):
        if self.starts < 1:
            raise ConfigurationError("starts must be at least 1")
        if not (0.0 < self.contraction < 1.0):
            raise ConfigurationError(f"contraction must lie in (0, 1), got {self.contraction}")
        if self.budget < self.starts:
            raise ConfigurationError(f"budget ({self.budget}) must be at least the number of starts ({self.starts})")
        if not (self.initial_step > 0 and self.min_step > 0):
            raise ConfigurationError("initial_step and min_step must be positive")
        if self.threads < 1:
            raise ConfigurationError("threads must be at least 1")
        if self.benchmark_mode not in BENCHMARK_MODES:
            raise ConfigurationError(f"benchmark_mode must be one of {BENCHMARK_MODES}")


@dataclass
class StartSummary:
    index: int
    kind: str
    initial: np.ndarray
    value: float
    converged: bool
    evaluations: int


@dataclass
class OptimizeResult:
    """
    Best strategy found, its value parts and the trace of accepted iterates
    of every start.  ``bound_holds`` is ``None`` when no density (or no
    passing certificate) was available for the moment diagnostics.
    """

    theta_star: Strategy
    v_star: float
    v_plus: float
    v_minus: float
    winner: int
    converged: bool
    evaluations: int
    sup_v_minus: float
    trace: pd.DataFrame
    starts: List[StartSummary] = field(default_factory=list)
    bound_holds: Optional[bool] = None
    note: str = RANDOMIZATION_NOTE

    def winner_trace(self) -> pd.DataFrame:
        return self.trace[self.trace["start"] == self.winner].reset_index(drop=True)

    def to_summary(self, tree: ScenarioTree) -> dict:
        return {
            "theta_star": {str(int(node)): self.theta_star.at(tree, node).tolist() for node in tree.internal},
            "v_star": self.v_star,
            "v_plus": self.v_plus,
            "v_minus": self.v_minus,
            "winner": self.winner,
            "converged": self.converged,
            "evaluations": self.evaluations,
            "sup_v_minus": self.sup_v_minus,
            "bound_holds": self.bound_holds,
            "note": self.note,
            "starts": [
                {"index": s.index, "kind": s.kind, "initial": s.initial.tolist(), "value": s.value, "converged": s.converged, "evaluations": s.evaluations}
                for s in self.starts
            ],
        }


def evaluate_strategy(tree: ScenarioTree, spec: CptSpec, z: float, theta) -> Tuple[float, float, float]:
    """``(V, V_plus, V_minus)`` of ``X_T^z(theta) - B``."""
    return cpt_parts(terminal_distribution(tree, z, theta), spec)


def is_admissible(tree: ScenarioTree, spec: CptSpec, z: float, theta) -> bool:
    """
    Whether ``V_minus(z, theta) < inf``.

    Always true on a finite tree, so every strategy is admissible; the check
    stays so callers do not special-case finite markets.
    """
    return bool(np.isfinite(evaluate_strategy(tree, spec, z, theta)[2]))


def _blocks(tree: ScenarioTree) -> List[np.ndarray]:
    return [np.arange(row * tree.d, (row + 1) * tree.d) for row in range(tree.n_internal)]


def canonical_rows(tree: ScenarioTree) -> np.ndarray:
    """
    Information-node rows (indices into ``tree.internal``) in an order fixed
    by the tree's data alone, so relabeling the nodes does not change it.

    Nodes are ranked bottom-up by their increment, branch probability,
    benchmark and the sorted ranks of their children; the order is the
    breadth-first walk visiting children by rank.  Equal ranks mean
    identical subtrees.
    """
    rank = np.zeros(tree.n_nodes, dtype=int)
    for t in range(tree.T, -1, -1):
        nodes = tree.nodes_at_depth(t)
        keys = []
        for node in nodes:
            leaf = tree.leaf_index[node]
            bench = float(tree.benchmark[leaf]) if leaf >= 0 else 0.0
            keys.append((tuple(tree.increments[node].tolist()), float(tree.cond_prob[node]), bench, tuple(sorted(rank[tree.children[node]].tolist()))))
        order = sorted(range(nodes.size), key=keys.__getitem__)
        current = 0
        for pos, k in enumerate(order):
            if pos and keys[k] != keys[order[pos - 1]]:
                current += 1
            rank[nodes[k]] = current

    rows = []
    queue = [0]
    for node in queue:
        if tree.internal_index[node] >= 0:
            rows.append(int(tree.internal_index[node]))
        queue.extend(sorted(tree.children[node].tolist(), key=lambda child: rank[child]))
    return np.array(rows, dtype=int)


def _coordinates(tree: ScenarioTree, rows: np.ndarray) -> np.ndarray:
    """``perm[c]`` is the strategy-vector index of canonical coordinate ``c``."""
    return (rows[:, None] * tree.d + np.arange(tree.d)).ravel()


def _start_points(
    tree: ScenarioTree,
    config: OptimizeConfig,
    density: Optional[MartingaleDensity],
    certificate: Optional[NaCertificate],
    perm: np.ndarray,
) -> List[Tuple[str, np.ndarray]]:
    """Starting points in canonical coordinates."""
    points = [("zero", np.zeros(tree.strategy_dim))]
    if density is not None and len(points) < config.starts:
        points.append(("phi_star", density.phi_star.to_vector()[perm]))
    if certificate is not None and certificate.passed:
        scale = np.repeat(1.0 / certificate.kappa, tree.d)[perm]
    else:
        scale = np.ones(tree.strategy_dim)
    while len(points) < config.starts:
        rng = make_rng(config.seed, "optimize", "start", len(points))
        points.append(("gaussian", rng.standard_normal(tree.strategy_dim) * scale))
    return points


def _pattern_search(objective, x0: np.ndarray, blocks: List[np.ndarray], budget: int, config: OptimizeConfig):
    x = x0.copy()
    fx, fplus, fminus = objective(x)
    evaluations = 1
    accepted = [(evaluations, x.copy(), fx, fplus, fminus)]
    steps = np.full(len(blocks), config.initial_step)

    def exhausted():
        return evaluations >= budget

    while not exhausted() and np.any(steps >= config.min_step):
        sweep_start = x.copy()
        moved = False
        for b, block in enumerate(blocks):
            if steps[b] < config.min_step:
                continue
            improved = False
            for j in block:
                for sign in (1.0, -1.0):
                    if exhausted():
                        break
                    trial = x.copy()
                    trial[j] += sign * steps[b]
                    ft = objective(trial)
                    evaluations += 1
                    if ft[0] > fx:
                        x, (fx, fplus, fminus) = trial, ft
                        accepted.append((evaluations, x.copy(), fx, fplus, fminus))
                        improved = True
                        break
            if not improved and not exhausted():
                steps[b] *= config.contraction
            moved |= improved
        if moved and not exhausted():
            trial = x + (x - sweep_start)
            ft = objective(trial)
            evaluations += 1
            if ft[0] > fx:
                x, (fx, fplus, fminus) = trial, ft
                accepted.append((evaluations, x.copy(), fx, fplus, fminus))
    converged = bool(np.all(steps < config.min_step))
    return x, (fx, fplus, fminus), evaluations, converged, accepted


def _trace_rows(tree, start_index, accepted, density, certificate) -> List[dict]:
    rows = []
    q = density.q_leaf if density is not None else None
    for iterate, (evaluations, x, fx, fplus, fminus) in enumerate(accepted):
        row = {"start": start_index, "iterate": iterate, "evaluations": evaluations, "V": fx, "V_plus": fplus, "V_minus": fminus}
        if density is not None:
            theta = Strategy.from_vector(tree, x)
            holds = True
            for t in range(1, tree.T + 1):
                nodes = tree.nodes_at_depth(t - 1)
                node_q = tree.node_sums(q)[nodes]
                row[f"theta_moment_{t}"] = float(np.dot(node_q, np.sqrt(np.linalg.norm(theta.values[tree.internal_index[nodes]], axis=1))))
                if certificate is not None and certificate.passed:
                    lhs, rhs = theta_moment_bound(tree, density, certificate, theta, t)
                    row[f"theta_bound_{t}"] = rhs
                    holds &= lhs <= rhs + BOUND_SLACK
            if certificate is not None and certificate.passed:
                row["bound_holds"] = bool(holds)
        rows.append(row)
    return rows


def maximize_cpt(
    tree: ScenarioTree,
    spec: CptSpec,
    z: float,
    config: Optional[OptimizeConfig] = None,
    density: Optional[MartingaleDensity] = None,
    certificate: Optional[NaCertificate] = None,
) -> OptimizeResult:
    """
    Multi-start pattern search for ``sup_theta V(z, theta)``.

    Starts are the zero strategy, the martingale-measure maximizer
    ``phi_star`` (when ``density`` is given) and seeded Gaussian points
    scaled per information node by ``1/kappa``.  The winner is the highest
    value, ties going to the lowest start index.

    Along every accepted iterate the trace records ``V``, ``V_minus`` and,
    with a density, ``E_Q|theta_t|^(1/2)`` together with its moment bound.
    ``best_so_far`` is the running maximum of ``V`` over the whole trace,
    starts taken in index order.

    Coordinates are visited in :func:`canonical_rows` order, so relabeling
    the tree's nodes leaves the result unchanged.

    Raises
    ------
    GateRefusal
        When ``config.require_gate`` and the exponents are not well posed.
    SpecificationError
        When ``config.require_continuous`` and the spec is not declared
        continuous.
    """
    config = config or OptimizeConfig()
    if config.require_gate:
        verdict = classify(*spec.parameters, benchmark_mode=config.benchmark_mode)
        if not verdict.tag.well_posed:
            raise GateRefusal(f"Refusing to optimize: {verdict.tag.value} ({verdict.witness})", verdict)
    if config.require_continuous and not spec.continuous:
        raise SpecificationError(f"Spec {spec.name!r} is not declared continuous")
    if certificate is None:
        certificate = check_robust_na(tree)
    if not certificate.passed:
        logger.info("No-arbitrage certificate failed (%s); moment bounds are skipped", certificate.failure.describe())

    # the search runs in canonical coordinates so node ids never matter
    perm = _coordinates(tree, canonical_rows(tree))
    blocks = _blocks(tree)
    points = _start_points(tree, config, density, certificate, perm)
    per_start = config.budget // len(points)

    def original(x):
        vector = np.empty_like(x)
        vector[perm] = x
        return vector

    def objective(x):
        return evaluate_strategy(tree, spec, z, Strategy.from_vector(tree, original(x)))

    def run(item):
        index, (kind, x0) = item
        x, parts, evaluations, converged, accepted = _pattern_search(objective, x0, blocks, per_start, config)
        logger.debug("start %d (%s): V=%.10g after %d evaluations, converged=%s", index, kind, parts[0], evaluations, converged)
        accepted = [(n, original(xa), fx, fplus, fminus) for n, xa, fx, fplus, fminus in accepted]
        return index, kind, original(x0), original(x), parts, evaluations, converged, accepted

    outcomes = parallel_map(run, list(enumerate(points)), threads=config.threads, progress=config.progress, desc="starts")

    best = max(outcomes, key=lambda o: (o[4][0], -o[0]))
    index, _, _, x, (v, v_plus, v_minus), _, converged, _ = best

    rows = []
    for o in outcomes:
        rows.extend(_trace_rows(tree, o[0], o[7], density, certificate))
    trace = pd.DataFrame(rows)
    trace["best_so_far"] = trace["V"].cummax()
    bound_holds = bool(trace["bound_holds"].all()) if "bound_holds" in trace else None
    if bound_holds is False:
        logger.warning("Moment bound violated along the optimizer trace")

    result = OptimizeResult(
        theta_star=Strategy.from_vector(tree, x),
        v_star=v,
        v_plus=v_plus,
        v_minus=v_minus,
        winner=index,
        converged=converged,
        evaluations=int(sum(o[5] for o in outcomes)),
        sup_v_minus=float(trace["V_minus"].max()),
        trace=trace,
        starts=[StartSummary(o[0], o[1], o[2], o[4][0], o[6], o[5]) for o in outcomes],
        bound_holds=bound_holds,
    )
    if not converged:
        logger.warning("Optimizer budget exhausted before the pattern step fell below %.1e", config.min_step)
    return result
