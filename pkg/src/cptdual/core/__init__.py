from .arbitrage import NaCertificate, check_robust_na
from .cpt import CptSpec, choquet_brute, choquet_minus, choquet_plus, cpt_parts, cpt_value, distorted_integral
from .distribution import DiscreteDistribution
from .dual import MartingaleDensity, construct_q, moment_diagnostics, verify_martingale
from .gate import ParameterVerdict, RayProbeReport, Verdict, classify, ray_probe
from .innovations import JointDensity, TransformChain, conditional_cdf, independentize, inverse_rosenblatt, rosenblatt
from .lemmas import InequalityReport, StressFamily, check_moz1, check_moz2, check_suti
from .market import ScenarioTree, Strategy, WealthProcess, terminal_distribution, wealth
from .optimize import OptimizeConfig, OptimizeResult, maximize_cpt

__ALL__ = [
    NaCertificate,
    check_robust_na,
    CptSpec,
    DiscreteDistribution,
    choquet_brute,
    choquet_minus,
    choquet_plus,
    cpt_parts,
    cpt_value,
    distorted_integral,
    MartingaleDensity,
    construct_q,
    moment_diagnostics,
    verify_martingale,
    ParameterVerdict,
    RayProbeReport,
    Verdict,
    classify,
    ray_probe,
    JointDensity,
    TransformChain,
    conditional_cdf,
    independentize,
    inverse_rosenblatt,
    rosenblatt,
    InequalityReport,
    StressFamily,
    check_moz1,
    check_moz2,
    check_suti,
    ScenarioTree,
    Strategy,
    WealthProcess,
    terminal_distribution,
    wealth,
    OptimizeConfig,
    OptimizeResult,
    maximize_cpt,
]
