from ._version import __version__
from .core import (
    CptSpec,
    DiscreteDistribution,
    JointDensity,
    MartingaleDensity,
    NaCertificate,
    ScenarioTree,
    Strategy,
    TransformChain,
    check_robust_na,
    choquet_minus,
    choquet_plus,
    classify,
    construct_q,
    cpt_value,
    maximize_cpt,
    ray_probe,
)

__all__ = [
    "CptSpec",
    "DiscreteDistribution",
    "JointDensity",
    "MartingaleDensity",
    "NaCertificate",
    "ScenarioTree",
    "Strategy",
    "TransformChain",
    "check_robust_na",
    "choquet_minus",
    "choquet_plus",
    "classify",
    "construct_q",
    "cpt_value",
    "maximize_cpt",
    "ray_probe",
    "__version__",
]
