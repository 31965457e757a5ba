"""Decision channels: assembly, source scheduling, the decision cycle, lifecycle.

A :class:`Channel` owns everything about one decision pipeline and is
driven either by a :class:`TaskManager` (threads on the wall clock) or by
a co-simulation driver calling :meth:`Channel.poll` on a simulated clock.
Both paths go through the same trigger cell, so the single-cycle and
coalescing guarantees hold for either.
"""

from __future__ import annotations

import enum
import heapq
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .clock import Clock, WallClock
from .dataspace import DataBlockView, DataProduct, DataSpace, SpaceHandle
from .diagnostics import DiagnosticsLog
from .errors import (
    DataSpaceError,
    EngineError,
    FrameworkError,
    InferenceError,
    InvalidTransition,
    PublisherError,
    TransformError,
    UnknownChannel,
    UnknownProduct,
)
from .logic import DependencyPlan, InferenceResult, run_inference, validate
from .model import (
    CYCLE_PRODUCT,
    ChannelConfig,
    Defaults,
    EngineConfig,
    ModuleSpec,
    SourceProxyBinding,
)
from .plugins import Module, PluginRegistry

SOURCE_FAILURE_BUDGET = 5


class ChannelState(str, enum.Enum):
    BOOT = "boot"
    STEADY = "steady"
    CYCLING = "cycling"
    STOPPING = "stopping"
    STOPPED = "stopped"
    FAILED = "failed"


@dataclass(frozen=True)
class CycleOutcome:
    generation: int
    outcome: str
    fired_rules: tuple[str, ...] = ()
    publishers_run: tuple[str, ...] = ()
    duration: float = 0.0
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "generation": self.generation,
            "outcome": self.outcome,
            "fired_rules": list(self.fired_rules),
            "publishers_run": list(self.publishers_run),
            "duration": self.duration,
            "error": self.error,
        }


def transform_order(transforms: Iterable[ModuleSpec]) -> list[str]:
    """Topological order of transforms by produces/consumes, ties by name."""
    transforms = list(transforms)
    producer = {p: t.name for t in transforms for p in t.produces}
    edges: dict[str, set[str]] = {t.name: set() for t in transforms}
    indeg = {t.name: 0 for t in transforms}
    for t in transforms:
        for c in t.consumes:
            src = producer.get(c)
            if src is not None and src != t.name and t.name not in edges[src]:
                edges[src].add(t.name)
                indeg[t.name] += 1
    ready = [n for n, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for m in sorted(edges[n]):
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(ready, m)
    if len(order) != len(transforms):
        stuck = sorted(n for n, d in indeg.items() if d > 0)
        raise FrameworkError(f"transform dependency cycle among {stuck}")
    return order


class Channel:
    """One assembled decision channel (the unit a Task Manager runs)."""

    def __init__(
        self,
        config: ChannelConfig,
        space: SpaceHandle,
        dataspace: DataSpace,
        modules: Mapping[str, Module],
        plan: DependencyPlan,
        defaults: Defaults = Defaults(),
        clock: Clock | None = None,
    ) -> None:
        self.config = config
        self.id = config.channel_id
        self.space = space
        self.dataspace = dataspace
        self.modules = dict(modules)
        self.plan = plan
        self.defaults = defaults
        self.clock = clock or dataspace.clock
        self.transform_order = transform_order(config.transforms)
        self._transforms = {t.name: t for t in config.transforms}
        self._publishers = {p.name: p for p in config.publishers}
        self._sources = {s.name: s for s in config.sources}
        self._proxies = {p.name: p for p in config.source_proxies}
        self.diagnostics = DiagnosticsLog(self.id, self.clock)

        self._cond = threading.Condition()
        self._state = ChannelState.BOOT
        self._running = False
        self._pending = False
        self._in_flight = 0
        self._dirty = False
        self.max_in_flight = 0
        self.triggers = 0
        self.cycle_count = 0
        self.last_outcome: CycleOutcome | None = None
        self.outcomes: list[CycleOutcome] = []
        self._runs: dict[str, int] = {}
        self._failures: dict[str, int] = {}
        self._next_due: dict[str, float] = {}
        self._started_at = self.clock.now()

    # -- introspection -------------------------------------------------------

    @property
    def state(self) -> ChannelState:
        with self._cond:
            return self._state

    @property
    def running(self) -> bool:
        return self._running

    @property
    def in_flight(self) -> int:
        return self._in_flight

    @property
    def pending(self) -> bool:
        with self._cond:
            return self._pending

    @property
    def dirty(self) -> bool:
        with self._cond:
            return self._dirty

    def source_names(self) -> list[str]:
        return [*self._sources, *self._proxies]

    def unsatisfied_sources(self) -> list[str]:
        return [n for n in self.source_names() if not self._runs.get(n)]

    def period(self, name: str) -> float:
        spec = self._sources.get(name) or self._proxies[name]
        return spec.period if spec.period is not None else self.defaults.source_period

    def status(self) -> dict[str, Any]:
        last = self.last_outcome
        return {
            "channel": self.id,
            "state": self.state.value,
            "cycles": self.cycle_count,
            "generation": self.space.generation,
            "last_outcome": last.to_dict() if last else None,
            "unsatisfied_sources": self.unsatisfied_sources(),
        }

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> ChannelState:
        with self._cond:
            if self._running:
                raise InvalidTransition(f"channel {self.id} is already {self._state.value}")
            if self._state is ChannelState.STOPPED:
                self.space.reopen()
            self._state = ChannelState.BOOT
            self._running = True
            self._pending = self._dirty = False
            self._runs.clear()
            self._failures.clear()
            now = self.clock.now()
            self._started_at = now
            self._next_due = {n: now for n in self.source_names()}
        self.diagnostics.emit(logging.INFO, "-", "start")
        return ChannelState.BOOT

    def stop(self, grace: float | None = None) -> ChannelState:
        """Drain the in-flight cycle (bounded by ``grace``), then close the space."""
        grace = self.defaults.stop_grace if grace is None else grace
        with self._cond:
            if not self._running:
                raise InvalidTransition(f"channel {self.id} is not running")
            self._state = ChannelState.STOPPING
            self._pending = self._dirty = False
            self._cond.notify_all()
            deadline = time.monotonic() + grace
            while self._in_flight:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    self.diagnostics.emit(logging.WARNING, "-", "stop_grace_exceeded")
                    break
                self._cond.wait(remaining)
            self._state = ChannelState.STOPPED
            self._running = False
            self.space.close()
            self._cond.notify_all()
        self.diagnostics.emit(logging.INFO, "-", "stopped")
        return ChannelState.STOPPED

    def _fail(self, reason: str) -> None:
        with self._cond:
            if self._state in (ChannelState.STOPPING, ChannelState.STOPPED, ChannelState.FAILED):
                return
            self._state = ChannelState.FAILED
            self._pending = self._dirty = False
            self._cond.notify_all()
        self.diagnostics.emit(logging.ERROR, "-", "failed", reason)

    def check_boot_deadline(self, now: float | None = None) -> bool:
        """Fail the channel if boot has not completed in time. Returns True if it failed."""
        now = self.clock.now() if now is None else now
        with self._cond:
            late = (
                self._running
                and self._state is ChannelState.BOOT
                and now - self._started_at > self.defaults.boot_timeout
            )
        if late:
            self._fail("boot timeout; unsatisfied sources: " + ", ".join(self.unsatisfied_sources()))
        return late

    # -- trigger cell --------------------------------------------------------

    def signal(self) -> bool:
        """Request a decision cycle. Returns True if a cycle became pending."""
        with self._cond:
            self.triggers += 1
            if self._state not in (ChannelState.STEADY, ChannelState.CYCLING):
                return False
            if self._in_flight:
                self._dirty = True
                return False
            self._pending = True
            self._cond.notify_all()
            return True

    def _try_begin(self, force: bool = False) -> bool:
        with self._cond:
            if self._state is not ChannelState.STEADY or self._in_flight:
                return False
            if not (self._pending or force):
                return False
            self._pending = False
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
            self._state = ChannelState.CYCLING
            return True

    def _end(self) -> None:
        with self._cond:
            self._in_flight -= 1
            if self._state is ChannelState.CYCLING:
                self._state = ChannelState.STEADY
                if self._dirty:
                    self._dirty = False
                    self._pending = True
            else:
                self._dirty = False
            self._cond.notify_all()

    def wait_for_trigger(self, timeout: float) -> bool:
        with self._cond:
            if not self._pending and self._running:
                self._cond.wait(timeout)
            return self._pending

    # -- sources -------------------------------------------------------------

    def _mark_ran(self, name: str) -> None:
        with self._cond:
            self._failures[name] = 0
            self._runs[name] = self._runs.get(name, 0) + 1
            if self._state is ChannelState.BOOT and not self.unsatisfied_sources():
                self._state = ChannelState.STEADY
                booted = True
            else:
                booted = False
        if booted:
            self.diagnostics.emit(logging.INFO, "-", "steady")

    def _source_failed(self, name: str, exc: BaseException) -> None:
        with self._cond:
            self._failures[name] = self._failures.get(name, 0) + 1
            count = self._failures[name]
        self.diagnostics.emit(logging.WARNING, name, "source_error", f"{type(exc).__name__}: {exc}")
        if count >= SOURCE_FAILURE_BUDGET:
            self._fail(f"source {name} failed {count} consecutive times")

    def _accepting_sources(self) -> bool:
        with self._cond:
            return self._running and self._state in (
                ChannelState.BOOT,
                ChannelState.STEADY,
                ChannelState.CYCLING,
            )

    def run_source_once(self, name: str) -> bool:
        """Invoke one source (or proxy), put its products, and signal a trigger."""
        if name in self._proxies:
            return self._run_proxy_once(self._proxies[name])
        spec = self._sources[name]
        if not self._accepting_sources():
            return False
        try:
            produced = self.modules[name].invoke({})
            if produced is None:
                produced = {}
            if not isinstance(produced, Mapping):
                raise FrameworkError(f"source returned {type(produced).__name__}, not a mapping")
            products = []
            for pname in sorted(produced):
                if pname not in spec.produces:
                    self.diagnostics.emit(logging.WARNING, name, "undeclared_product", pname)
                    continue
                products.append(DataProduct(pname, produced[pname], name))
            for p in products:
                self.space.put(p)
        except Exception as exc:  # plugin faults become diagnostics
            self._source_failed(name, exc)
            return False
        self._mark_ran(name)
        self.signal()
        return True

    def resolve_source_proxy(self, binding: SourceProxyBinding) -> DataProduct | None:
        """Fetch another channel's product under a local alias; None when too stale."""
        if binding.source_channel == self.id:
            raise FrameworkError(f"proxy {binding.name} points at its own channel")
        other = self.dataspace.space(binding.source_channel)
        found = other.latest(binding.product_name)
        produced_at = found.produced_at if found.produced_at is not None else self.clock.now()
        if self.clock.now() - produced_at > binding.max_staleness:
            return None
        return DataProduct(
            binding.local_alias,
            found.value,
            produced_by=binding.name,
            produced_at=produced_at,
            origin={"channel": binding.source_channel, "generation": found.generation},
        )

    def _run_proxy_once(self, binding: SourceProxyBinding) -> bool:
        if not self._accepting_sources():
            return False
        try:
            product = self.resolve_source_proxy(binding)
        except UnknownProduct:
            product = None
        except Exception as exc:
            self._source_failed(binding.name, exc)
            return False
        if product is None:
            self.diagnostics.emit(logging.DEBUG, binding.name, "proxy_waiting")
            return False
        try:
            self.space.put(product)
        except Exception as exc:
            self._source_failed(binding.name, exc)
            return False
        self._mark_ran(binding.name)
        self.signal()
        return True

    # -- decision cycle ------------------------------------------------------

    def execute_cycle(self) -> CycleOutcome:
        """Run one decision cycle now. The channel must be steady and idle."""
        if not self._try_begin(force=True):
            raise InvalidTransition(
                f"channel {self.id} cannot cycle in state {self.state.value}"
                + (" with a cycle in flight" if self._in_flight else "")
            )
        try:
            return self._cycle()
        finally:
            self._end()

    def run_pending(self, limit: int | None = None) -> list[CycleOutcome]:
        """Run cycles while a trigger is pending (including coalesced follow-ups)."""
        done = []
        while (limit is None or len(done) < limit) and self._try_begin():
            try:
                done.append(self._cycle())
            finally:
                self._end()
        return done

    def _inputs(self, view: DataBlockView, spec: ModuleSpec, error: type[EngineError]) -> dict[str, DataProduct]:
        inputs = {}
        for name in spec.consumes:
            product = view.get(name)
            if product is None:
                raise error(f"{spec.name}: input product {name!r} does not exist")
            inputs[name] = product
        return inputs

    def _run_transforms(self, view: DataBlockView) -> None:
        for tname in self.transform_order:
            spec = self._transforms[tname]
            inputs = self._inputs(view, spec, TransformError)
            try:
                out = self.modules[tname].invoke(inputs)
            except Exception as exc:
                raise TransformError(f"{tname}: {type(exc).__name__}: {exc}") from exc
            out = dict(out or {})
            missing = sorted(set(spec.produces) - set(out))
            extra = sorted(set(out) - set(spec.produces))
            if missing or extra:
                raise TransformError(
                    f"{tname}: contract violation (missing {missing}, undeclared {extra})"
                )
            for pname in spec.produces:
                try:
                    view.record(DataProduct(pname, out[pname], tname))
                except DataSpaceError as exc:
                    raise TransformError(f"{tname}: {exc}") from exc

    def _run_publishers(self, view: DataBlockView, result: InferenceResult) -> tuple[list[str], list[str]]:
        ran, errors = [], []
        for pname in sorted(result.publishers_to_run):
            spec = self._publishers[pname]
            ran.append(pname)
            try:
                inputs = self._inputs(view, spec, PublisherError)
                out = self.modules[pname].invoke(inputs) or {}
                for key in sorted(out):
                    view.record(DataProduct(key, out[key], pname))
            except Exception as exc:
                errors.append(f"{pname}: {type(exc).__name__}: {exc}")
                self.diagnostics.emit(logging.WARNING, pname, "publisher_error", str(exc))
        return ran, errors

    def _cycle(self) -> CycleOutcome:
        started = self.clock.now()
        generation, view = self.space.snapshot()
        view.record(
            DataProduct(
                CYCLE_PRODUCT,
                {"channel": self.id, "generation": generation, "started_at": started},
                "framework",
            )
        )
        outcome, error = "success", None
        fired: tuple[str, ...] = ()
        ran: list[str] = []
        try:
            self._run_transforms(view)
        except TransformError as exc:
            outcome, error = "transform_error", str(exc)
        else:
            try:
                result = run_inference(self.plan, view)
            except (InferenceError, DataSpaceError) as exc:
                outcome, error = "fact_error", str(exc)
            else:
                fired = result.fired_rules
                ran, errors = self._run_publishers(view, result)
                if errors:
                    outcome, error = "publisher_error", "; ".join(errors)
        view.lock_and_archive(outcome)
        ended = self.clock.now()
        co = CycleOutcome(generation, outcome, tuple(fired), tuple(ran), ended - started, error)
        with self._cond:
            self.cycle_count += 1
            self.last_outcome = co
            self.outcomes.append(co)
        if error:
            self.diagnostics.emit(logging.WARNING, "-", outcome, error)
        return co

    # -- co-simulation -------------------------------------------------------

    def poll(self, now: float | None = None) -> list[CycleOutcome]:
        """Run every due source once, then any pending cycles. Used by simulated drivers."""
        now = self.clock.now() if now is None else now
        if not self._running:
            return []
        for name in self.source_names():
            due = self._next_due.get(name, now)
            if due <= now + 1e-9:
                self.run_source_once(name)
                self._next_due[name] = due + self.period(name)
        outcomes = self.run_pending()
        self.check_boot_deadline(now)
        return outcomes


def assemble_channel(
    config: ChannelConfig,
    registry: PluginRegistry,
    dataspace: DataSpace,
    defaults: Defaults = Defaults(),
    clock: Clock | None = None,
) -> Channel:
    for proxy in config.source_proxies:
        if proxy.source_channel not in dataspace:
            raise UnknownChannel(f"proxy {proxy.name} targets unknown channel {proxy.source_channel!r}")
    plan = validate(config.facts, config.rules, [p.name for p in config.publishers])
    modules = {spec.name: registry.create(spec.plugin, spec.parameters) for spec in config.modules()}
    space = dataspace.space(config.channel_id) if config.channel_id in dataspace else dataspace.create_space(config.channel_id)
    return Channel(config, space, dataspace, modules, plan, defaults, clock)


class TaskManager:
    """Runs one channel on threads: a loop per source plus a cycle executor."""

    def __init__(self, channel: Channel, poll_interval: float = 0.05) -> None:
        self.channel = channel
        self.poll_interval = poll_interval
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def start(self) -> ChannelState:
        state = self.channel.start()
        self._stop = threading.Event()
        self._threads = [
            threading.Thread(target=self._source_loop, args=(name,), daemon=True, name=f"{self.channel.id}:{name}")
            for name in self.channel.source_names()
        ]
        self._threads.append(
            threading.Thread(target=self._executor, daemon=True, name=f"{self.channel.id}:cycle")
        )
        for t in self._threads:
            t.start()
        return state

    def _source_loop(self, name: str) -> None:
        period = self.channel.period(name)
        while not self._stop.is_set():
            self.channel.run_source_once(name)
            if self.channel.state is ChannelState.FAILED:
                return
            self._stop.wait(period)

    def _executor(self) -> None:
        while not self._stop.is_set():
            if self.channel.wait_for_trigger(self.poll_interval):
                self.channel.run_pending(limit=1)
            self.channel.check_boot_deadline()

    def stop(self, grace: float | None = None) -> ChannelState:
        self._stop.set()
        state = self.channel.stop(grace)
        for t in self._threads:
            t.join(timeout=5)
        return state

    def status(self) -> dict[str, Any]:
        return self.channel.status()


class Engine:
    """Holds the DataSpace and every channel of one engine configuration."""

    def __init__(
        self,
        config: EngineConfig,
        registry: PluginRegistry,
        clock: Clock | None = None,
        archive_dir=None,
    ) -> None:
        self.config = config
        self.clock = clock or WallClock()
        self.dataspace = DataSpace(archive_dir, self.clock)
        for c in config.channels:
            self.dataspace.create_space(c.channel_id)
        self.channels: dict[str, Channel] = {
            c.channel_id: assemble_channel(c, registry, self.dataspace, config.defaults, self.clock)
            for c in config.channels
        }
        self.managers: dict[str, TaskManager] = {}

    def channel(self, channel_id: str) -> Channel:
        try:
            return self.channels[channel_id]
        except KeyError:
            raise UnknownChannel(channel_id) from None

    # threaded mode
    def start(self, channel_id: str | None = None) -> dict[str, ChannelState]:
        ids = [channel_id] if channel_id else list(self.channels)
        out = {}
        for cid in ids:
            ch = self.channel(cid)
            if ch.running:
                raise InvalidTransition(f"channel {cid} is already {ch.state.value}")
            manager = TaskManager(ch)
            self.managers[cid] = manager
            out[cid] = manager.start()
        return out

    def stop(self, channel_id: str | None = None, grace: float | None = None) -> dict[str, ChannelState]:
        ids = [channel_id] if channel_id else [c for c, ch in self.channels.items() if ch.running]
        out = {}
        for cid in ids:
            ch = self.channel(cid)
            manager = self.managers.get(cid)
            out[cid] = manager.stop(grace) if manager else ch.stop(grace)
        return out

    def status(self, channel_id: str | None = None) -> dict[str, Any]:
        if channel_id:
            return self.channel(channel_id).status()
        return {cid: ch.status() for cid, ch in self.channels.items()}

    # simulated mode
    def start_simulated(self) -> None:
        for ch in self.channels.values():
            ch.start()

    def poll(self) -> list[CycleOutcome]:
        now = self.clock.now()
        out = []
        for ch in self.channels.values():
            out.extend(ch.poll(now))
        return out
