"""
Loading scenario trees and run documents from JSON or YAML files.
"""
import json
import os
from logging import getLogger
from typing import Any

import yaml

from cptdual.core.errors import ConfigurationError
from cptdual.core.market import ScenarioTree

YAML_EXTENSIONS = (".yaml", ".yml")

logger = getLogger(__name__)


def parse_document(path: str) -> Any:
    """
    Read a JSON document, or YAML when the extension says so.

    Raises
    ------
    ConfigurationError
        When the file is missing or does not parse.
    """
    if not os.path.isfile(path):
        raise ConfigurationError(f"No such file: {path}")
    extension = os.path.splitext(path)[1].lower()
    with open(path, "rt") as f:
        try:
            if extension in YAML_EXTENSIONS:
                return yaml.safe_load(f)
            return json.load(f)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigurationError(f"Could not parse {path}: {e}") from e


def load_tree(path: str) -> ScenarioTree:
    """Load a nested tree document (see :meth:`ScenarioTree.from_dict`)."""
    document = parse_document(path)
    if isinstance(document, dict) and "tree" in document:
        document = document["tree"]
    tree = ScenarioTree.from_dict(document)
    logger.debug("Loaded %r from %s", tree, path)
    return tree
