"""
Run configuration: one marshmallow schema per subcommand.

A run document is JSON (or YAML) with the common keys ``seed`` and
``threads`` plus the subcommand's own keys.  Loading builds the library
objects (trees, specs, densities) so a loaded :class:`RunConfig` is ready to
execute.

.. autodata:: SUBCOMMANDS
"""
import copy
import os
from logging import getLogger
from typing import Any, Dict, Optional

import yaml
from marshmallow import RAISE, Schema, ValidationError, fields, post_load, validate, validates_schema

from cptdual.core.arbitrage import DEFAULT_BETA_MIN, DEFAULT_DIRECTION_GRID
from cptdual.core.cpt import PRESETS, preset
from cptdual.core.dual import DEFAULT_MAX_ITER, DEFAULT_TOLERANCE
from cptdual.core.errors import ConfigurationError, SpecificationError, TreeValidationError
from cptdual.core.gate import BENCHMARK_MODES, DEFAULT_DIVERGENCE_BOUND, DEFAULT_RANDOM_DIRECTIONS, DEFAULT_WINDOW
from cptdual.core.innovations import DEFAULT_HALF_WIDTH, DEFAULT_NODES, JointDensity
from cptdual.core.lemmas import DEFAULT_TREND_TOLERANCE, FAMILY_KINDS
from cptdual.core.market import ScenarioTree
from cptdual.io import load_density_grid, parse_document

logger = getLogger(__name__)

DENSITY_PRESETS = ("product_normal", "correlated_normal")


class TreeField(fields.Field):
    """A nested tree document, turned into a :class:`ScenarioTree`."""

    def _deserialize(self, value, attr, data, **kwargs):
        if not isinstance(value, dict):
            raise ValidationError("Expected a tree object or a path to a tree file")
        try:
            return ScenarioTree.from_dict(value)
        except TreeValidationError as e:
            raise ValidationError(str(e)) from e


class SpecSchema(Schema):
    """
    CPT specification: a preset name plus its parameters, e.g.
    ``{"preset": "power", "alpha": 0.5, "beta": 0.9, "gamma": 0.6, "delta": 0.8}``.
    """

    preset = fields.Str(load_default="power", validate=validate.OneOf(sorted(PRESETS)))
    alpha = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    beta = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    gamma = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    delta = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    k_plus = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    k_minus = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    loss_aversion = fields.Float(validate=validate.Range(min=0, min_inclusive=False))

    @post_load
    def make_spec(self, data, **kwargs):
        name = data.pop("preset")
        try:
            return preset(name, **data).validate()
        except TypeError as e:
            raise ValidationError(f"Bad parameters for preset {name!r}: {e}") from e
        except SpecificationError as e:
            raise ValidationError(str(e)) from e


class DensitySchema(Schema):
    """Joint density: a named preset or a tabulated grid file."""

    preset = fields.Str(validate=validate.OneOf(DENSITY_PRESETS))
    grid = fields.Str()
    dim = fields.Int(validate=validate.Range(min=1))
    mean = fields.List(fields.Float())
    cov = fields.List(fields.List(fields.Float()))
    half_width = fields.Float(load_default=DEFAULT_HALF_WIDTH, validate=validate.Range(min=0, min_inclusive=False))
    nodes = fields.Int(load_default=DEFAULT_NODES, validate=validate.Range(min=3))

    @validates_schema
    def check_source(self, data, **kwargs):
        if ("preset" in data) == ("grid" in data):
            raise ValidationError("Give exactly one of 'preset' or 'grid'")
        if data.get("preset") == "product_normal" and "dim" not in data:
            raise ValidationError("product_normal needs 'dim'", "dim")
        if data.get("preset") == "correlated_normal" and not ("mean" in data and "cov" in data):
            raise ValidationError("correlated_normal needs 'mean' and 'cov'")

    @post_load
    def make_density(self, data, **kwargs):
        try:
            if "grid" in data:
                return load_density_grid(data["grid"], nodes=data["nodes"])
            if data["preset"] == "product_normal":
                return JointDensity.product_normal(data["dim"], half_width=data["half_width"], nodes=data["nodes"])
            return JointDensity.correlated_normal(data["mean"], data["cov"], half_width=data["half_width"], nodes=data["nodes"])
        except ConfigurationError as e:
            raise ValidationError(str(e)) from e


class OptimizerSchema(Schema):
    starts = fields.Int(load_default=8, validate=validate.Range(min=1))
    initial_step = fields.Float(load_default=1.0, validate=validate.Range(min=0, min_inclusive=False))
    contraction = fields.Float(load_default=0.5, validate=validate.Range(min=0, max=1, min_inclusive=False, max_inclusive=False))
    min_step = fields.Float(load_default=1e-6, validate=validate.Range(min=0, min_inclusive=False))
    budget = fields.Int(load_default=20000, validate=validate.Range(min=1))
    require_gate = fields.Bool(load_default=False)
    require_continuous = fields.Bool(load_default=True)
    benchmark_mode = fields.Str(load_default="Ba", validate=validate.OneOf(BENCHMARK_MODES))


class FamilySchema(Schema):
    count = fields.Int(load_default=200, validate=validate.Range(min=1))
    min_atoms = fields.Int(load_default=1, validate=validate.Range(min=1))
    max_atoms = fields.Int(load_default=8, validate=validate.Range(min=1))
    low = fields.Float(load_default=0.0)
    high = fields.Float(load_default=10.0)
    kind = fields.Str(load_default="random", validate=validate.OneOf(FAMILY_KINDS))


class SutiSchema(Schema):
    a = fields.Float(load_default=0.8)
    b = fields.Float(load_default=1.2)
    s = fields.Float(load_default=1.0)


class Moz2Schema(Schema):
    a = fields.Float(load_default=0.5)
    b = fields.Float(load_default=1.5)
    s = fields.Float(load_default=0.5)


class Moz1Schema(Schema):
    alpha = fields.Float(load_default=0.5)
    beta = fields.Float(load_default=0.9)
    gamma = fields.Float(load_default=0.6)
    delta = fields.Float(load_default=0.8)
    m = fields.Float(load_default=0.0)
    stability_tol = fields.Float(load_default=1.0, validate=validate.Range(min=0))
    kind = fields.Str(load_default="two_point", validate=validate.OneOf(FAMILY_KINDS))


class RunConfig:
    """
    A validated run document.

    Parameters
    ----------
    subcommand : str
    seed : int
        Root of every random stream of the run
    threads : int
        Worker threads; never changes results
    options : dict
        Subcommand settings with library objects already built
    snapshot : dict
        The document as loaded (tree files inlined), recorded in the manifest
    """

    def __init__(self, subcommand: str, seed: int, threads: int, options: Dict[str, Any], snapshot: Optional[Dict[str, Any]] = None):
        self.subcommand = subcommand
        self.seed = seed
        self.threads = threads
        self.options = options
        self.snapshot = snapshot or {}

    def __getitem__(self, key):
        return self.options[key]

    def get(self, key, default=None):
        return self.options.get(key, default)

    def to_yaml(self, stream=None):
        """
        Serialize the snapshot to YAML

        Parameters
        ----------
        stream
            If None (default) return a string, else dump the yaml into this
            stream.
        """
        return yaml.safe_dump(self.snapshot, stream, sort_keys=True)

    @staticmethod
    def from_yaml(stream, subcommand: str) -> "RunConfig":
        """Load a run document with inline trees from a YAML string or stream."""
        return load_run_document(yaml.safe_load(stream), subcommand)


class RunSchema(Schema):
    """Keys shared by every subcommand."""

    class Meta:
        unknown = RAISE

    subcommand = None

    seed = fields.Int(load_default=0, validate=validate.Range(min=0, max=2**64 - 1))
    threads = fields.Int(load_default=1, validate=validate.Range(min=1))

    @post_load
    def make_config(self, data, **kwargs):
        seed = data.pop("seed")
        threads = data.pop("threads")
        return RunConfig(self.subcommand, seed, threads, data)


class GateSchema(RunSchema):
    subcommand = "gate"

    alpha = fields.Float(required=True)
    beta = fields.Float(required=True)
    gamma = fields.Float(required=True)
    delta = fields.Float(required=True)
    benchmark_mode = fields.Str(load_default="Ba", validate=validate.OneOf(BENCHMARK_MODES))
    tree = TreeField()
    r = fields.Float(validate=validate.Range(min=0, min_inclusive=False))


class NaCheckSchema(RunSchema):
    subcommand = "na-check"

    tree = TreeField(required=True)
    direction_grid = fields.Int(load_default=DEFAULT_DIRECTION_GRID, validate=validate.Range(min=4))
    beta_min = fields.Float(load_default=DEFAULT_BETA_MIN, validate=validate.Range(min=0, max=1, min_inclusive=False))


class ConstructQSchema(NaCheckSchema):
    subcommand = "construct-q"

    tol = fields.Float(load_default=DEFAULT_TOLERANCE, validate=validate.Range(min=0, min_inclusive=False))
    max_iter = fields.Int(load_default=DEFAULT_MAX_ITER, validate=validate.Range(min=1))


class _StrategySchema(RunSchema):
    tree = TreeField(required=True)
    spec = fields.Nested(SpecSchema, required=True)
    z = fields.Float(required=True)


class MomentsSchema(Schema):
    pi = fields.Float(required=True, validate=validate.Range(min=1, min_inclusive=False))
    xi = fields.Float(load_default=0.5, validate=validate.Range(min=0, max=1, min_inclusive=False, max_inclusive=False))


class EvaluateSchema(_StrategySchema):
    subcommand = "evaluate"

    theta = fields.Raw(load_default=None)
    moments = fields.Nested(MomentsSchema)


class OptimizeSchema(_StrategySchema):
    subcommand = "optimize"

    optimizer = fields.Nested(OptimizerSchema, load_default=lambda: OptimizerSchema().load({}))
    use_density = fields.Bool(load_default=True)


class ProbeSchema(_StrategySchema):
    subcommand = "probe"

    directions = fields.List(fields.Raw())
    lambda_min = fields.Float(load_default=1.0, validate=validate.Range(min=0, min_inclusive=False))
    doublings = fields.Int(load_default=20, validate=validate.Range(min=1))
    window = fields.Int(load_default=DEFAULT_WINDOW, validate=validate.Range(min=1))
    divergence_bound = fields.Float(load_default=DEFAULT_DIVERGENCE_BOUND, validate=validate.Range(min=0, min_inclusive=False))
    random_directions = fields.Int(load_default=DEFAULT_RANDOM_DIRECTIONS, validate=validate.Range(min=0))

    @validates_schema
    def check_window(self, data, **kwargs):
        if data.get("doublings", 20) < data.get("window", DEFAULT_WINDOW):
            raise ValidationError("doublings must be at least window", "doublings")


class LemmasSchema(RunSchema):
    subcommand = "lemmas"

    family = fields.Nested(FamilySchema, load_default=lambda: FamilySchema().load({}))
    trend_tol = fields.Float(load_default=DEFAULT_TREND_TOLERANCE, validate=validate.Range(min=0))
    suti = fields.Nested(SutiSchema, load_default=lambda: SutiSchema().load({}))
    moz1 = fields.Nested(Moz1Schema, load_default=lambda: Moz1Schema().load({}))
    moz2 = fields.Nested(Moz2Schema, load_default=lambda: Moz2Schema().load({}))
    tree = TreeField()


class RosenblattSchema(RunSchema):
    subcommand = "rosenblatt"

    density = fields.Nested(DensitySchema, required=True)
    samples = fields.Int(load_default=10000, validate=validate.Range(min=10))
    T = fields.Int(validate=validate.Range(min=1))
    N = fields.Int(load_default=1, validate=validate.Range(min=1))
    check_monotone = fields.Bool(load_default=True)


SCHEMAS = {
    schema.subcommand: schema
    for schema in (GateSchema, ConstructQSchema, NaCheckSchema, EvaluateSchema, OptimizeSchema, ProbeSchema, LemmasSchema, RosenblattSchema)
}

#: Subcommands with a run schema
SUBCOMMANDS = list(SCHEMAS)


def _resolve_paths(data: Dict[str, Any], base_dir: str) -> Dict[str, Any]:
    """Inline tree files and make grid paths absolute, relative to the config file."""
    data = copy.deepcopy(data)
    if isinstance(data.get("tree"), str):
        document = parse_document(os.path.join(base_dir, data["tree"]))
        data["tree"] = document["tree"] if isinstance(document, dict) and "tree" in document else document
    density = data.get("density")
    if isinstance(density, dict) and isinstance(density.get("grid"), str):
        density["grid"] = os.path.abspath(os.path.join(base_dir, density["grid"]))
    return data


def load_run_document(data: Any, subcommand: str, base_dir: str = ".", overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Validate a parsed run document for ``subcommand``.

    ``overrides`` (e.g. ``--seed`` from the command line) replace document
    keys; ``None`` values are ignored.

    Raises
    ------
    ConfigurationError
        For an unknown subcommand or a document that is not an object.
    marshmallow.ValidationError
        With field paths for schema violations.
    """
    if subcommand not in SCHEMAS:
        raise ConfigurationError(f"Unknown subcommand {subcommand!r}")
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("A run document must be a JSON object")
    data = _resolve_paths(data, base_dir)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    config = SCHEMAS[subcommand]().load(data)
    config.snapshot = data
    logger.debug("Loaded %s config with seed %d", subcommand, config.seed)
    return config


def load_run_config(path: str, subcommand: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Load and validate the run document at ``path``; tree paths resolve against its directory."""
    document = parse_document(path)
    return load_run_document(document, subcommand, base_dir=os.path.dirname(os.path.abspath(path)), overrides=overrides)
