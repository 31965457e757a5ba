"""Local control service: HTTP/JSON over a Unix domain socket."""

from .app import create_app
from .client import ControlClient
from .live import LiveRun

__all__ = ["ControlClient", "LiveRun", "create_app"]
