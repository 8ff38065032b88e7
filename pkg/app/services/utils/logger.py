import sys

from loguru import logger

from app.core.config import ExecutionMode, settings


def configure_logging(quiet: bool = False) -> None:
    """
    Configuring logging level based on EXECUTION_MODE. For test mode level is DEBUG. For other cases INFO.
    The quiet flag of the command line lowers everything to WARNING.
    """
    match settings.EXECUTION_MODE:
        case ExecutionMode.TEST:
            log_level = 'DEBUG'
        case _:
            log_level = 'INFO'
    if quiet:
        log_level = 'WARNING'

    logger.remove()
    logger.add(sys.stderr, level=log_level)
    return None
