# ruff: noqa: D100, D101, D102, D103, D104, D107
from __future__ import annotations

import atexit
import json
import logging
import sys
from typing import Mapping, cast

import numpy as np

VERBOSE = 5


class HomodriftLogger(logging.getLoggerClass()):
    def __init__(self: HomodriftLogger, name: str, level: int = logging.NOTSET) -> None:
        super().__init__(name, level)

        logging.addLevelName(VERBOSE, 'VERBOSE')

    def verbose(
        self: HomodriftLogger,
        msg: object,
        *args: tuple[object],
        exc_info: logging._ExcInfoType | None = None,
        stack_info: bool = False,
        stacklevel: int = 1,
        extra: Mapping[str, object] | None = None,
    ) -> None:
        if self.isEnabledFor(VERBOSE):
            self._log(
                VERBOSE,
                msg,
                args=args,
                exc_info=exc_info,
                stack_info=stack_info,
                stacklevel=stacklevel,
                extra=extra,
            )


logging.setLoggerClass(HomodriftLogger)


def get_logger(name: str) -> HomodriftLogger:
    return cast(HomodriftLogger, logging.getLogger(name))


logger = get_logger('homodrift')
logger.propagate = False

# attributes every record carries, anything else came in through `extra=`
RECORD_KEYS = frozenset(
    logging.LogRecord('', 0, '', 0, '', (), None).__dict__,
) | {'message', 'asctime', 'taskName'}


def _plain(value: object) -> object:
    if isinstance(value, np.ndarray | np.generic):
        return value.tolist()
    return str(value)


class ExtraFormatter(logging.Formatter):
    """Appends the `extra=` fields of a record as one line of sorted JSON."""

    def format(self: ExtraFormatter, record: logging.LogRecord) -> str:
        string = super().format(record)
        extra = {
            key: value
            for key, value in record.__dict__.items()
            if key not in RECORD_KEYS
        }
        if extra:
            string += ' ' + json.dumps(extra, sort_keys=True, default=_plain)
        return string


def _formatter() -> ExtraFormatter:
    return ExtraFormatter(
        '%(asctime)s [%(levelname)s] %(threadName)s %(message)s',
        '%Y-%m-%d %H:%M:%S',
    )


def add_stream_handler(logger: HomodriftLogger, level: int = logging.DEBUG) -> None:
    # stdout carries the command output
    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setLevel(level)
    stream_handler.setFormatter(_formatter())
    logger.addHandler(stream_handler)

    atexit.register(stream_handler.flush)


def add_file_handler(logger: HomodriftLogger, level: int = logging.DEBUG) -> None:
    file_handler = logging.FileHandler(f'{logger.name}.log')
    file_handler.setLevel(level)
    file_handler.setFormatter(_formatter())
    logger.addHandler(file_handler)

    atexit.register(file_handler.flush)


__all__ = ('logger', 'get_logger', 'add_stream_handler', 'add_file_handler')
