"""
cptdual run session
"""
import datetime
import hashlib
import json
import os
from dataclasses import dataclass, field
from logging import getLogger as _getLogger
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import scipy

from cptdual._version import __version__
from cptdual.app.config import RunConfig
from cptdual.app.writers import LocalWriter, RunResult, Writer, to_jsonable
from cptdual.util.time import to_iso, utc_now

logger = _getLogger(__name__)

RUN_ID_LENGTH = 16


def artifact_versions() -> Dict[str, str]:
    return {"cptdual": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "pandas": pd.__version__}


@dataclass
class RunManifest:
    """Provenance of one run directory."""

    run_id: str
    timestamp: datetime.datetime
    subcommand: str
    seed: int
    config: dict
    versions: Dict[str, str] = field(default_factory=artifact_versions)
    outputs: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "timestamp": to_iso(self.timestamp),
            "subcommand": self.subcommand,
            "seed": self.seed,
            "config": self.config,
            "versions": self.versions,
            "outputs": self.outputs,
        }


def compute_run_id(subcommand: str, snapshot: dict, seed: int) -> str:
    """
    First 16 hex digits of the SHA-256 of the canonical JSON of the run.
    The thread count is left out; it never changes results.
    """
    config = {k: v for k, v in snapshot.items() if k not in ("threads", "seed")}
    canonical = json.dumps(to_jsonable({"subcommand": subcommand, "config": config, "seed": seed}), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:RUN_ID_LENGTH]


class RunSession:
    """
    Parameters
    ----------
    config : RunConfig
        The validated run document
    writer : Writer, optional
        Output writer; a :class:`LocalWriter` under ``out_dir`` when omitted
    out_dir : str
        Output directory for the default writer
    session_timestamp : datetime.datetime, optional
        Override the timestamp recorded in the manifest.  Normally you
        shouldn't need to override this value
    """

    def __init__(
        self,
        config: RunConfig,
        writer: Optional[Writer] = None,
        out_dir: str = "runs",
        session_timestamp: Optional[datetime.datetime] = None,
    ):
        self.config = config
        self.writer = writer or LocalWriter(out_dir, ["all"])
        self.session_timestamp = session_timestamp or utc_now()
        self.run_id = compute_run_id(config.subcommand, config.snapshot, config.seed)

    @property
    def subcommand(self) -> str:
        return self.config.subcommand

    @property
    def run_dir(self) -> str:
        return os.path.join(self.writer.output_path, self.writer.path_suffix(self))

    def manifest(self, outputs: List[str]) -> RunManifest:
        return RunManifest(
            run_id=self.run_id,
            timestamp=self.session_timestamp,
            subcommand=self.subcommand,
            seed=self.config.seed,
            config=self.config.snapshot,
            outputs=list(outputs),
        )

    def write(self, result: RunResult) -> List[str]:
        """Write the result, its tables and the manifest."""
        outputs = self.writer.write(self, result)
        logger.info("Run %s (%s) wrote %d files", self.run_id, self.subcommand, len(outputs))
        return outputs
