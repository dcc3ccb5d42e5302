import typing

import click
import pandas as pd

try:
    import colorama

    colorama.init()
except ImportError:
    pass


def echo(message: typing.Union[str, list], **styles):
    if isinstance(message, list):
        for msg in message:
            click.secho(msg, **styles)
    else:
        click.secho(message, **styles)


def echo_table(frame: pd.DataFrame, **styles):
    """Print a summary table without its index."""
    if frame is None or frame.empty:
        return
    with pd.option_context("display.max_colwidth", 120, "display.width", 200):
        echo(frame.to_string(index=False), **styles)
