"""
The cptdual run application API
"""
from .config import RunConfig, load_run_config
from .session import RunManifest, RunSession
from .writers import LocalWriter, RunResult

__ALL__ = [
    load_run_config,
    RunConfig,
    RunManifest,
    RunSession,
    LocalWriter,
    RunResult,
]
