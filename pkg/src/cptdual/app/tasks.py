"""
What each subcommand computes.

Every task takes a loaded :class:`RunConfig` and returns a
:class:`RunResult`; nothing here touches the filesystem.
"""
import itertools
from logging import getLogger
from typing import Callable, Dict, Iterable, Optional

import numpy as np
import pandas as pd

from cptdual.app.config import RunConfig
from cptdual.app.writers import RunResult
from cptdual.core.arbitrage import check_robust_na
from cptdual.core.cpt import cpt_parts
from cptdual.core.dual import admissible_pi_range, construct_q, moment_diagnostics, verify_martingale
from cptdual.core.gate import benchmark_moment, classify, ray_probe
from cptdual.core.innovations import TransformChain, draw_samples, independentize
from cptdual.core.lemmas import StressFamily, check_moz1, check_moz2, check_suti
from cptdual.core.market import ScenarioTree, Strategy, terminal_distribution
from cptdual.core.optimize import OptimizeConfig, is_admissible, maximize_cpt
from cptdual.util.stats import max_cdf_deviation, pairwise_correlations, quantile_chi_square

logger = getLogger(__name__)

LEMMAS = ("suti", "moz1", "moz2")
UNIFORMITY_THRESHOLD = 0.02
CORRELATION_THRESHOLD = 0.05


def _display(rows: Dict[str, object]) -> pd.DataFrame:
    return pd.DataFrame({"quantity": list(rows), "value": [str(v) for v in rows.values()]})


def reference_tree() -> ScenarioTree:
    """One-step market moving ``+2`` with probability 0.6 and ``-1`` with 0.4."""
    return ScenarioTree.one_step([2.0, -1.0], ["3/5", "2/5"], s0=[0.0])


def run_gate(config: RunConfig) -> RunResult:
    verdict = classify(config["alpha"], config["beta"], config["gamma"], config["delta"], benchmark_mode=config["benchmark_mode"])
    summary = {"verdict": verdict.to_summary()}
    if config.get("r") is not None:
        summary["pi_range"] = admissible_pi_range(config["beta"], config["delta"], config["r"])
        if config.get("tree") is not None:
            summary["benchmark_moment"] = benchmark_moment(config["tree"], config["r"])
    rows = {"verdict": verdict.tag.value, "witness": verdict.witness, "benchmark": verdict.benchmark}
    if "pi_range" in summary:
        rows["pi_range"] = summary["pi_range"]
    return RunResult(summary, {}, _display(rows))


def run_na_check(config: RunConfig) -> RunResult:
    tree = config["tree"]
    certificate = check_robust_na(tree, direction_grid=config["direction_grid"], beta_min=config["beta_min"], seed=config.seed)
    rows = {"passed": certificate.passed, "exact": certificate.exact, "kappa_min": float(certificate.kappa.min()), "beta_min": float(certificate.beta.min())}
    if certificate.failure is not None:
        rows["failure"] = certificate.failure.describe()
    return RunResult({"certificate": certificate.to_summary()}, {"certificate": certificate.to_frame(tree)}, _display(rows))


def run_construct_q(config: RunConfig) -> RunResult:
    tree = config["tree"]
    certificate = check_robust_na(tree, direction_grid=config["direction_grid"], beta_min=config["beta_min"], seed=config.seed)
    density = construct_q(tree, tol=config["tol"], max_iter=config["max_iter"], certificate=certificate)
    residual = verify_martingale(tree, density)
    summary = {"density": density.to_summary(tree), "martingale_residual": residual, "certificate": certificate.to_summary()}
    rows = {
        "martingale_residual": residual,
        "rho_min": float(density.rho.min()),
        "rho_max": float(density.rho.max()),
        "iterations": density.iterations,
    }
    for node in tree.children[0]:
        rows[f"Q(node {int(node)} | root)"] = float(density.q_branch[node])
    return RunResult(summary, {"density": density.to_frame(tree), "newton": density.trace_frame()}, _display(rows))


def run_evaluate(config: RunConfig) -> RunResult:
    tree, spec, z = config["tree"], config["spec"], config["z"]
    theta = Strategy.zeros(tree) if config["theta"] is None else Strategy.from_nested(tree, config["theta"])
    dist = terminal_distribution(tree, z, theta)
    v, v_plus, v_minus = cpt_parts(dist, spec)
    summary = {"V": v, "V_plus": v_plus, "V_minus": v_minus, "admissible": is_admissible(tree, spec, z, theta), "spec": spec.name}
    tables = {"terminal": pd.DataFrame({"leaf": tree.leaves, "p": tree.leaf_prob, "B": tree.benchmark, "X_T_minus_B": dist.values})}
    rows = {"V": v, "V_plus": v_plus, "V_minus": v_minus}
    moments = config.get("moments")
    if moments is not None:
        density = construct_q(tree)
        report = moment_diagnostics(tree, density, z, theta, moments["pi"], xi=moments["xi"])
        summary["moments"] = report.to_summary()
        tables["moments"] = report.to_frame()
        rows["martingale_ok"] = report.martingale_ok
        rows["remark_holds"] = report.remark_holds
    return RunResult(summary, tables, _display(rows))


def run_optimize(config: RunConfig) -> RunResult:
    tree, spec, z = config["tree"], config["spec"], config["z"]
    settings = OptimizeConfig(seed=config.seed, threads=config.threads, **config["optimizer"])
    certificate = check_robust_na(tree, seed=config.seed)
    density = construct_q(tree, certificate=certificate) if certificate.passed and config["use_density"] else None
    result = maximize_cpt(tree, spec, z, settings, density=density, certificate=certificate)
    verdict = classify(*spec.parameters, benchmark_mode=settings.benchmark_mode)
    summary = {"result": result.to_summary(tree), "verdict": verdict.to_summary()}
    rows = {
        "v_star": result.v_star,
        "V_plus": result.v_plus,
        "V_minus": result.v_minus,
        "winner": result.winner,
        "converged": result.converged,
        "evaluations": result.evaluations,
        "bound_holds": result.bound_holds,
        "verdict": verdict.tag.value,
    }
    return RunResult(summary, {"trace": result.trace}, _display(rows))


def run_probe(config: RunConfig) -> RunResult:
    tree, spec, z = config["tree"], config["spec"], config["z"]
    lambdas = config["lambda_min"] * 2.0 ** np.arange(config["doublings"] + 1)
    report = ray_probe(
        tree,
        spec,
        z,
        directions=config.get("directions"),
        lambdas=lambdas,
        seed=config.seed,
        window=config["window"],
        divergence_bound=config["divergence_bound"],
        random_directions=config["random_directions"],
        threads=config.threads,
    )
    verdict = classify(*spec.parameters)
    summary = {"probe": report.to_summary(), "verdict": verdict.to_summary()}
    rows = {"divergent": report.divergent, "certified_bounded": report.certified_bounded, "net_slope": report.net_slope, "verdict": verdict.tag.value}
    return RunResult(summary, {"probe": report.to_frame(), "slopes": report.slopes_frame()}, _display(rows))


def run_lemmas(config: RunConfig, selected: Optional[Iterable[str]] = None) -> RunResult:
    """Run the selected inequality checks (all of them when ``selected`` is empty)."""
    selected = [name for name in LEMMAS if name in set(selected or LEMMAS)]
    family = StressFamily(seed=config.seed, **config["family"])
    reports = {}
    if "suti" in selected:
        p = config["suti"]
        reports["suti"] = check_suti(family, p["a"], p["b"], p["s"], trend_tol=config["trend_tol"], threads=config.threads)
    if "moz1" in selected:
        p = dict(config["moz1"])
        tree = config.get("tree") or reference_tree()
        density = construct_q(tree)
        moz1_family = StressFamily(seed=config.seed, count=family.count, low=-family.high, high=family.high, kind=p.pop("kind"), m=p["m"])
        reports["moz1"] = check_moz1(moz1_family, density, p["alpha"], p["beta"], p["gamma"], p["delta"], m=p["m"], stability_tol=p["stability_tol"], threads=config.threads)
    if "moz2" in selected:
        p = config["moz2"]
        reports["moz2"] = check_moz2(family, p["a"], p["b"], p["s"], trend_tol=config["trend_tol"], threads=config.threads)

    members = pd.concat([r.members.assign(lemma=name) for name, r in reports.items()], ignore_index=True)
    summary = {name: r.to_summary() for name, r in reports.items()}
    display = pd.DataFrame(
        [{"lemma": name, "passed": r.passed, "max_ratio": r.max_ratio, "trend": r.trend, "exponent": r.exponent, **r.constants} for name, r in reports.items()]
    )
    return RunResult(summary, {"members": members}, display)


def run_rosenblatt(config: RunConfig) -> RunResult:
    density = config["density"]
    T = config.get("T") or density.dim // config["N"]
    N = config["N"]
    chain = TransformChain.from_density(density)
    samples = draw_samples(density, config["samples"], seed=config.seed, chain=chain)
    blocks = independentize(density, samples, T, N, threads=config.threads, chain=chain)
    uniforms = blocks.reshape(samples.shape[0], -1)

    deviations = [max_cdf_deviation(uniforms[:, i]) for i in range(density.dim)]
    correlations = pairwise_correlations(uniforms) if density.dim > 1 else np.zeros(0)
    chi_square = {f"{i},{j}": quantile_chi_square(uniforms[:, i], uniforms[:, j]) for i, j in itertools.combinations(range(density.dim), 2)}
    max_correlation = float(np.max(np.abs(correlations), initial=0.0))
    summary = {
        "density": density.name,
        "samples": int(samples.shape[0]),
        "blocks": [T, N],
        "max_cdf_deviation": deviations,
        "max_abs_correlation": max_correlation,
        "chi_square": {k: {"statistic": s, "pvalue": p} for k, (s, p) in chi_square.items()},
        "uniform": bool(max(deviations) < UNIFORMITY_THRESHOLD),
        "uncorrelated": bool(max_correlation < CORRELATION_THRESHOLD),
        "monotone": chain.check_monotone(seed=config.seed) if config["check_monotone"] else None,
    }
    table = pd.DataFrame(np.column_stack([samples, uniforms]), columns=[f"x{i}" for i in range(density.dim)] + [f"u{i}" for i in range(density.dim)])
    rows = {
        "samples": summary["samples"],
        "max_cdf_deviation": max(deviations),
        "max_abs_correlation": max_correlation,
        "uniform": summary["uniform"],
        "uncorrelated": summary["uncorrelated"],
        "monotone": summary["monotone"],
    }
    return RunResult(summary, {"samples": table}, _display(rows))


TASKS: Dict[str, Callable[[RunConfig], RunResult]] = {
    "gate": run_gate,
    "na-check": run_na_check,
    "construct-q": run_construct_q,
    "evaluate": run_evaluate,
    "optimize": run_optimize,
    "probe": run_probe,
    "lemmas": run_lemmas,
    "rosenblatt": run_rosenblatt,
}
