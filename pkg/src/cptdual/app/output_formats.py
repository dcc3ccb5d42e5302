"""
Define available output formats

.. autodata:: SUPPORTED_OUTPUT_FORMATS
"""
from enum import Enum, auto


class OutputFormat(Enum):
    """
    List of output formats that we support.

    Attributes
    ----------
    json
        ``result.json``, the nested run summary
    csv
        one flat table per trace (``trace.csv``, ``probe.csv``, ...)
    """

    json = auto()
    csv = auto()


#: All supported output formats
SUPPORTED_OUTPUT_FORMATS = list(OutputFormat.__members__.keys())
