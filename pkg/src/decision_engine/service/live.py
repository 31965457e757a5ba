"""Live mode: engine threads on the wall clock, a facility stepped in real
time, and the control service listening on a Unix domain socket."""

from __future__ import annotations

import logging
import threading
import time
from pathlib import Path

import uvicorn

from ..clock import WallClock
from ..framework import Engine
from ..model import EngineConfig
from ..sim.driver import RunReport, _report
from ..sim.facility import FacilitySim, SimAdapters
from ..sim.scenario import SimScenario
from .app import create_app

log = logging.getLogger(__name__)


class LiveRun:
    def __init__(
        self,
        config: EngineConfig,
        scenario: SimScenario,
        output_dir: str | Path,
        archive_dir: str | Path | None = None,
        socket_path: str | Path | None = None,
        speed: float = 1.0,
        tick: float = 0.1,
    ) -> None:
        from ..stdlib import standard_registry

        self.scenario = scenario
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.socket_path = Path(socket_path or config.control_socket)
        self.speed = speed
        self.tick = tick
        self.sim = FacilitySim(scenario)
        self.adapters = SimAdapters(self.sim)
        services = {
            "endpoints": {"sim": self.adapters},
            "output_dir": self.output_dir,
            "epoch": time.time(),
        }
        self.engine = Engine(
            config,
            standard_registry(services),
            clock=WallClock(),
            archive_dir=archive_dir if archive_dir is not None else config.archive_dir,
        )
        self._stop = threading.Event()
        self._server: uvicorn.Server | None = None
        self._threads: list[threading.Thread] = []

    def _step_facility(self) -> None:
        while not self._stop.wait(self.tick):
            with self.adapters.lock:
                self.sim.step(self.tick * self.speed)

    def start(self) -> None:
        if self.socket_path.exists():
            self.socket_path.unlink()
        self.socket_path.parent.mkdir(parents=True, exist_ok=True)
        self._server = uvicorn.Server(
            uvicorn.Config(create_app(self.engine), uds=str(self.socket_path), log_level="warning")
        )
        self._threads = [
            threading.Thread(target=self._server.run, daemon=True, name="control"),
            threading.Thread(target=self._step_facility, daemon=True, name="facility"),
        ]
        self.engine.start()
        for t in self._threads:
            t.start()
        deadline = time.monotonic() + 10
        while not self._server.started and time.monotonic() < deadline:
            time.sleep(0.01)

    def wait(self, duration: float | None = None) -> None:
        deadline = None if duration is None else time.monotonic() + duration
        while not self._stop.is_set():
            if self.sim.all_done():
                break
            if deadline is not None and time.monotonic() >= deadline:
                break
            time.sleep(0.1)

    def stop(self) -> RunReport:
        self._stop.set()
        for cid, ch in self.engine.channels.items():
            if ch.running:
                self.engine.stop(cid)
        if self._server is not None:
            self._server.should_exit = True
        for t in self._threads:
            t.join(timeout=10)
        if self.socket_path.exists():
            self.socket_path.unlink()
        outcome = "completed" if self.sim.all_done() else "stopped"
        return _report(self.scenario, self.sim, self.engine, outcome)
