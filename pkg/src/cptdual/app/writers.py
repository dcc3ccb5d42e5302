"""
Classes for writing run output
"""
import json
import math
import os
import typing
from abc import ABC, abstractmethod
from enum import Enum
from fractions import Fraction
from logging import getLogger
from string import Template
from typing import List, Optional

import numpy as np
import pandas as pd

from cptdual.app.output_formats import OutputFormat

DEFAULT_PATH_TEMPLATE = "$subcommand-$run_id"
RESULT_FILE = "result.json"
MANIFEST_FILE = "manifest.json"

logger = getLogger(__name__)


def to_jsonable(value):
    """
    Plain JSON types for nested results.  Non-finite floats become the
    strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, Enum):
        return value.value
    return value


def dumps(value) -> str:
    """Deterministic JSON: sorted keys, no NaN literals."""
    return json.dumps(to_jsonable(value), sort_keys=True, indent=2, allow_nan=False)


class RunResult:
    """
    What a run produces: a nested summary for ``result.json`` and named
    tables written as ``<name>.csv``.
    """

    def __init__(self, summary: dict, tables: Optional[typing.Dict[str, pd.DataFrame]] = None, display: Optional[pd.DataFrame] = None):
        self.summary = summary
        self.tables = tables or {}
        self.display = display


class Writer(ABC):
    """
    Class for writing run output

    Parameters
    ----------
    output_path : str
        Directory under which run directories are created
    formats : list
        Output formats, or ``["all"]``.
        See :data:`cptdual.app.output_formats.SUPPORTED_OUTPUT_FORMATS`
    path_template : str, optional
        Templatized run directory name using standard python string
        templates.  Variables are accessed via $identifier or ${identifier}.
        See :func:`Writer.template_params` for a list of available identifers.
        Default = :data:`DEFAULT_PATH_TEMPLATE`
    """

    def __init__(self, output_path: str, formats: List[str], path_template: typing.Optional[str] = None):
        if path_template is None:
            path_template = DEFAULT_PATH_TEMPLATE
        self.path_template = Template(path_template)
        self.formats = []
        if "all" in formats:
            self.formats = list(OutputFormat.__members__.values())
        else:
            for fmt in formats:
                try:
                    self.formats.append(OutputFormat[fmt])
                except KeyError:
                    raise ValueError("Unsupported format: {0}".format(fmt)) from None
        self.output_path = output_path

    @abstractmethod
    def write(self, session, result: RunResult) -> List[str]:
        """
        Write a run's result and manifest.  Must be implemented.

        Returns the written file names relative to the run directory.
        """
        raise NotImplementedError

    def path_suffix(self, session) -> str:
        return self.path_template.substitute(**self.template_params(session))

    @staticmethod
    def template_params(session) -> dict:
        """
        Template params:

        * ``subcommand``: the subcommand that ran
        * ``run_id``: content hash of the configuration
        * ``seed``: the run seed
        """
        return {"subcommand": session.subcommand, "run_id": session.run_id, "seed": str(session.config.seed)}


class LocalWriter(Writer):
    """
    Writer class that writes run directories to disk.

    See :class:`Writer` for a description of arguments
    """

    def write(self, session, result: RunResult) -> List[str]:
        path = self.ensure_path(self.path_suffix(session))
        outputs = []
        if OutputFormat.json in self.formats:
            with open(os.path.join(path, RESULT_FILE), "wt") as f:
                f.write(dumps(result.summary))
            outputs.append(RESULT_FILE)
        if OutputFormat.csv in self.formats:
            for name, frame in sorted(result.tables.items()):
                file_name = f"{name}.csv"
                frame.to_csv(os.path.join(path, file_name), index=False)
                outputs.append(file_name)
        manifest = session.manifest(outputs)
        with open(os.path.join(path, MANIFEST_FILE), "wt") as f:
            f.write(dumps(manifest.to_dict()))
        logger.debug("Wrote %s to %s", outputs + [MANIFEST_FILE], path)
        return outputs + [MANIFEST_FILE]

    def ensure_path(self, suffix: str) -> str:
        """
        Ensure that a path exists, creating it if not
        """
        path = os.path.join(self.output_path, suffix)
        os.makedirs(path, exist_ok=True)
        return path
