"""
Convenience module for displaying/configuring python logs for cptdual
"""


def display_logging(level="DEBUG", root_logger=False):
    """
    Convenience utility for setting cptdual to print logs to stdout.

    Solver progress (Newton iterations, accepted pattern-search moves) is
    logged at DEBUG, so this is the quickest way to watch a run.

    Parameters
    ----------
    level : str
        Logging level
    root_logger : bool, default=False
        Redirect to the root logger.
    """
    import logging
    import sys

    HANDLER_NAME = "cptdual-display"

    if isinstance(level, str):
        level = level.upper()

    logger = logging.getLogger("cptdual")
    logger.propagate = root_logger
    logger.setLevel(level)

    if not any(h.name == HANDLER_NAME for h in getattr(logger, "handlers", [])):
        handler = logging.StreamHandler(sys.stdout)
        handler.name = HANDLER_NAME
        handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))
        logger.addHandler(handler)
    logging.getLogger("cptdual.logs").debug(f"cptdual.logs logging -> stdout at level {level}")
