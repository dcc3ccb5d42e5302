import json
import logging
import sys

import click
from marshmallow import ValidationError

from cptdual import __version__ as cptdual_version
from cptdual.app.config import load_run_config
from cptdual.app.session import RunSession
from cptdual.app.tasks import LEMMAS, TASKS
from cptdual.cli.utils import echo, echo_table
from cptdual.core.errors import ConfigurationError, ConvergenceError, DomainError, SpecificationError

from .cli_text import CLI_DESCRIPTION, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_USAGE, INVALID_CONFIG, NOT_CONVERGED, RUN_FAILED, RUN_WRITTEN, UNKNOWN_COMMAND

_HANDLER_NAME = "cptdual-cli"


def _set_up_logger():
    # Log to console with a simple formatter; used by CLI
    module_logger = logging.getLogger("cptdual")
    if not any(h.get_name() == _HANDLER_NAME for h in module_logger.handlers):
        handler = logging.StreamHandler()
        handler.set_name(_HANDLER_NAME)
        handler.setFormatter(logging.Formatter("%(message)s"))
        module_logger.addHandler(handler)
    module_logger.setLevel(level=logging.WARNING)
    return module_logger


class UnknownSubcommand(click.UsageError):
    exit_code = EXIT_USAGE


class CptdualGroup(click.Group):
    def resolve_command(self, ctx, args):
        try:
            return super().resolve_command(ctx, args)
        except click.UsageError as e:
            raise UnknownSubcommand(f"{UNKNOWN_COMMAND}: {e.message}", ctx) from e


def run_options(func):
    func = click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads (results do not depend on it).")(func)
    func = click.option("--out-dir", "-o", default="runs", show_default=True, help="Directory for run directories.")(func)
    func = click.option("--seed", type=click.IntRange(min=0), default=None, help="Override the seed of the run document.")(func)
    func = click.argument("config", type=click.Path(dir_okay=False))(func)
    return func


def execute(subcommand: str, config: str, seed, out_dir: str, threads, **task_options):
    """
    Load, run and persist one subcommand.  The run directory is only created
    after the computation succeeded.
    """
    try:
        run_config = load_run_config(config, subcommand, overrides={"seed": seed, "threads": threads})
        result = TASKS[subcommand](run_config, **task_options)
    except ValidationError as e:
        echo(f"{INVALID_CONFIG}: {json.dumps(e.messages, sort_keys=True, default=str)}", fg="red", err=True)
        sys.exit(EXIT_INVALID)
    except (ConfigurationError, SpecificationError, DomainError) as e:
        echo(f"{RUN_FAILED}: {e}", fg="red", err=True)
        sys.exit(EXIT_INVALID)
    except ConvergenceError as e:
        echo(f"{NOT_CONVERGED}: {e}", fg="red", err=True)
        sys.exit(EXIT_NOT_CONVERGED)

    session = RunSession(run_config, out_dir=out_dir)
    session.write(result)
    echo_table(result.display)
    echo(f"{RUN_WRITTEN} {session.run_dir}", fg="green")


@click.group(cls=CptdualGroup, help=CLI_DESCRIPTION)
@click.version_option(version=cptdual_version)
@click.option(
    "--verbose",
    "-v",
    is_flag=True,
    default=False,
    help="Set cptdual CLI to use verbose output.",
)
def cli(verbose):
    logger = _set_up_logger()
    if verbose:
        logger.setLevel(logging.DEBUG)


@cli.command()
@run_options
def gate(config, seed, out_dir, threads):
    """Classify CPT exponents as well posed, ill posed or indeterminate."""
    execute("gate", config, seed, out_dir, threads)


@cli.command("na-check")
@run_options
def na_check(config, seed, out_dir, threads):
    """Robust no-arbitrage certificate (kappa, beta) of a scenario tree."""
    execute("na-check", config, seed, out_dir, threads)


@cli.command("construct-q")
@run_options
def construct_q(config, seed, out_dir, threads):
    """Equivalent martingale measure of a scenario tree."""
    execute("construct-q", config, seed, out_dir, threads)


@cli.command()
@run_options
def evaluate(config, seed, out_dir, threads):
    """CPT value of a strategy, with optional moment diagnostics."""
    execute("evaluate", config, seed, out_dir, threads)


@cli.command()
@run_options
def optimize(config, seed, out_dir, threads):
    """Multi-start search for the best CPT value."""
    execute("optimize", config, seed, out_dir, threads)


@cli.command()
@run_options
def probe(config, seed, out_dir, threads):
    """Leverage ray probe for ill-posedness."""
    execute("probe", config, seed, out_dir, threads)


@cli.command()
@run_options
@click.option("--suti", is_flag=True, default=False, help="Check the moment-versus-distorted-integral inequality.")
@click.option("--moz1", is_flag=True, default=False, help="Check the gains-versus-losses inequality under a mean constraint.")
@click.option("--moz2", is_flag=True, default=False, help="Check the sublinear distorted-integral inequality.")
def lemmas(config, seed, out_dir, threads, suti, moz1, moz2):
    """Empirical checks of the distorted-moment inequalities (all when no flag is given)."""
    flags = dict(zip(LEMMAS, (suti, moz1, moz2)))
    execute("lemmas", config, seed, out_dir, threads, selected=[name for name, on in flags.items() if on])


@cli.command()
@run_options
def rosenblatt(config, seed, out_dir, threads):
    """Independent innovations from a joint density."""
    execute("rosenblatt", config, seed, out_dir, threads)


def main():
    _set_up_logger()
    cli()


if __name__ == "__main__":
    main()
