CLI_DESCRIPTION = """
Behavioural portfolio diagnostics on finite scenario trees.

Every subcommand reads a JSON (or YAML) run document and writes a run
directory with manifest.json, result.json and CSV tables.
"""

RUN_FAILED = "Run failed"

INVALID_CONFIG = "Invalid configuration"

NOT_CONVERGED = "Numerical procedure did not converge"

UNKNOWN_COMMAND = "Unknown subcommand"

RUN_WRITTEN = "Run written to"

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3
EXIT_USAGE = 64
