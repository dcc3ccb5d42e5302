import logging

from cptdual.logs import display_logging


def test_display():
    display_logging("debug")
    logger = logging.getLogger("cptdual")
    assert logger.level == logging.DEBUG
    handlers = [h for h in logger.handlers if h.name == "cptdual-display"]
    display_logging("info")
    assert [h for h in logger.handlers if h.name == "cptdual-display"] == handlers
    assert len(handlers) == 1
    assert logger.level == logging.INFO
    logger.removeHandler(handlers[0])
    logger.propagate = True
    logger.setLevel(logging.NOTSET)
