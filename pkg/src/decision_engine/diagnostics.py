"""Structured diagnostics: ``ts level channel module event detail`` on stderr."""

from __future__ import annotations

import logging
import sys
from collections import deque
from dataclasses import dataclass

logger = logging.getLogger("decision_engine.diag")


@dataclass(frozen=True)
class Diagnostic:
    ts: float
    level: str
    channel: str
    module: str
    event: str
    detail: str


class DiagFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        ts = self.formatTime(record, "%Y-%m-%dT%H:%M:%S")
        channel = getattr(record, "channel", "-")
        module = getattr(record, "module_name", "-")
        event = getattr(record, "event", "-")
        return f"{ts} {record.levelname} {channel} {module} {event} {record.getMessage()}"


def configure_logging(level: int = logging.WARNING, stream=None) -> None:
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(DiagFormatter())
    logger.handlers[:] = [handler]
    logger.setLevel(level)
    logger.propagate = False


class DiagnosticsLog:
    """Bounded per-channel diagnostics, mirrored to the ``decision_engine.diag`` logger."""

    def __init__(self, channel: str, clock, maxlen: int = 1000) -> None:
        self.channel = channel
        self.clock = clock
        self.entries: deque[Diagnostic] = deque(maxlen=maxlen)

    def emit(self, level: int, module: str, event: str, detail: str = "") -> None:
        entry = Diagnostic(self.clock.now(), logging.getLevelName(level), self.channel, module, event, detail)
        self.entries.append(entry)
        logger.log(
            level,
            detail or "-",
            extra={"channel": self.channel, "module_name": module, "event": event},
        )

    def events(self, event: str | None = None) -> list[Diagnostic]:
        return [e for e in self.entries if event is None or e.event == event]
