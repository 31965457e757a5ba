"""Deterministic hybrid facility: job queue, cloud/HPC/grid providers, ledger.

Slots follow a pilot model: a provisioned slot spends ``startup_latency``
pending, then runs at most one job and retires. An unused slot retires
after the idle timeout. Every slot reserves its worst-case charge up
front (idle timeout plus the wall time it was requested for), which is
what lets the facility refuse requests it could not pay for.
"""

from __future__ import annotations

import heapq
import math
import random
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..clock import ManualClock
from ..errors import AdapterUnavailable
from .scenario import ProviderSpec, SimScenario

PENDING, IDLE, BUSY, RETIRED = "pending", "idle", "busy", "retired"
EPS = 1e-9


@dataclass
class Job:
    seq: int
    requirements: Mapping[str, Any]
    preferred: tuple[str, ...]
    queued_at: float
    state: str = "queued"
    started_at: float | None = None
    preemptions: int = 0

    @property
    def wall_seconds(self) -> float:
        return float(self.requirements["wall_hours"]) * 3600.0


@dataclass
class Slot:
    slot_id: int
    class_id: str
    bundle: str | None
    created_at: float
    ready_at: float
    lease_wall_hours: float
    max_charge: float
    state: str = PENDING
    charged: float = 0.0
    idle_since: float = 0.0
    job: Job | None = None
    job_end: float = 0.0


@dataclass
class Ledger:
    """Facility-side accounting, independent of anything the engine reports."""

    cloud_spend: float = 0.0
    hpc_hours_used: float = 0.0
    slot_hours: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "cloud_spend": self.cloud_spend,
            "hpc_hours_used": self.hpc_hours_used,
            "slot_hours": dict(sorted(self.slot_hours.items())),
        }


@dataclass
class SimEvents:
    materialized: int = 0
    started: int = 0
    completed: int = 0
    preempted: int = 0
    retired: int = 0
    arrived: int = 0


class FacilitySim:
    def __init__(self, scenario: SimScenario) -> None:
        self.scenario = scenario
        self.clock = ManualClock(scenario.epoch)
        self.rng = random.Random(scenario.seed)
        self.providers: dict[str, ProviderSpec] = {p.class_id: p for p in scenario.providers}
        self.up: dict[str, bool] = {c: True for c in self.providers}
        self.ledger = Ledger(slot_hours={c: 0.0 for c in sorted(self.providers)})
        self.jobs: list[Job] = []
        self.slots: dict[int, Slot] = {}
        self._live: list[Slot] = []
        self._queues: dict[str, list[tuple[int, int]]] = {c: [] for c in self.providers}
        self._waves = sorted(scenario.job_waves, key=lambda w: w.at)
        self._wave_idx = 0
        self._next_slot = 0
        self.queued = self.running = self.completed = 0
        self.preemptions = 0
        self.peak_slots: dict[str, int] = {c: 0 for c in sorted(self.providers)}
        self._queue_cache: list[dict[str, Any]] | None = None
        self._release_waves()

    # -- time ------------------------------------------------------------------

    @property
    def t(self) -> float:
        return self.clock.now() - self.scenario.epoch

    @property
    def all_arrived(self) -> bool:
        return self._wave_idx >= len(self._waves)

    def all_done(self) -> bool:
        return self.all_arrived and self.completed == self.scenario.total_jobs

    def _release_waves(self) -> int:
        n = 0
        while self._wave_idx < len(self._waves) and self._waves[self._wave_idx].at <= self.t + EPS:
            wave = self._waves[self._wave_idx]
            self._wave_idx += 1
            for _ in range(wave.count):
                job = Job(len(self.jobs), dict(wave.requirements), wave.preferred_resources, wave.at)
                self.jobs.append(job)
                self._enqueue(job)
                n += 1
        return n

    def _enqueue(self, job: Job) -> None:
        job.state = "queued"
        self.queued += 1
        self._queue_cache = None
        for c in job.preferred:
            heapq.heappush(self._queues[c], (job.seq, job.seq))

    def _take_job(self, slot: Slot) -> Job | None:
        heap = self._queues[slot.class_id]
        skipped = []
        found = None
        while heap:
            _, seq = heapq.heappop(heap)
            job = self.jobs[seq]
            if job.state != "queued":
                continue  # stale entry: started via another class
            if job.requirements["wall_hours"] > slot.lease_wall_hours + EPS:
                skipped.append((seq, seq))
                continue
            found = job
            break
        for item in skipped:
            heapq.heappush(heap, item)
        if found is not None:
            self.queued -= 1
            self._queue_cache = None
        return found

    def step(self, dt: float) -> SimEvents:
        """Advance the facility by ``dt`` simulated seconds."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        t0 = self.t
        t1 = t0 + dt
        events = SimEvents()
        requeue: list[Job] = []
        for slot in self._live:
            self._advance(slot, t0, t1, events, requeue)
        for job in requeue:
            self._enqueue(job)
        self._live = [s for s in self._live if s.state != RETIRED]
        self.clock.set(self.scenario.epoch + t1)
        events.arrived = self._release_waves()
        for c, n in self.alive_slots().items():
            if n > self.peak_slots[c]:
                self.peak_slots[c] = n
        assert self.queued + self.running + self.completed == len(self.jobs), "job accounting drift"
        return events

    def _charge(self, slot: Slot, seconds: float) -> None:
        if seconds <= 0:
            return
        hours = seconds / 3600.0
        spec = self.providers[slot.class_id]
        self.ledger.slot_hours[slot.class_id] += hours
        amount = hours * spec.unit_cost
        if spec.kind == "cloud":
            self.ledger.cloud_spend += amount
        elif spec.kind == "hpc":
            self.ledger.hpc_hours_used += amount
        slot.charged += amount

    def _retire(self, slot: Slot, events: SimEvents) -> None:
        slot.state = RETIRED
        slot.job = None
        events.retired += 1

    def _advance(self, slot: Slot, t0: float, t1: float, events: SimEvents, requeue: list[Job]) -> None:
        cursor = t0
        if slot.state == PENDING:
            if slot.ready_at > t1 + EPS:
                return
            slot.state = IDLE
            slot.idle_since = max(slot.ready_at, t0)
            cursor = slot.idle_since
            events.materialized += 1
        spec = self.providers[slot.class_id]
        while cursor < t1 - EPS and slot.state != RETIRED:
            if slot.state == IDLE:
                job = self._take_job(slot) if self.up[slot.class_id] else None
                if job is not None:
                    job.state = "running"
                    job.started_at = cursor
                    self.running += 1
                    slot.state = BUSY
                    slot.job = job
                    slot.job_end = cursor + job.wall_seconds
                    events.started += 1
                    continue
                expire = slot.idle_since + self.scenario.idle_timeout
                end = min(expire, t1)
                self._charge(slot, end - cursor)
                cursor = end
                if expire <= t1 + EPS:
                    self._retire(slot, events)
            else:  # BUSY
                end = min(slot.job_end, t1)
                if spec.kind == "grid" and spec.preemption_rate > 0:
                    hit = self._time_to_preemption(spec.preemption_rate)
                    if cursor + hit < end - EPS:
                        self._charge(slot, hit)
                        job = slot.job
                        assert job is not None
                        job.preemptions += 1
                        job.started_at = None
                        self.running -= 1
                        self.preemptions += 1
                        requeue.append(job)
                        events.preempted += 1
                        self._retire(slot, events)
                        return
                self._charge(slot, end - cursor)
                cursor = end
                if slot.job_end <= t1 + EPS:
                    job = slot.job
                    assert job is not None
                    job.state = "completed"
                    self.running -= 1
                    self.completed += 1
                    events.completed += 1
                    self._retire(slot, events)

    def _time_to_preemption(self, rate: float) -> float:
        """Seconds until preemption for a per-slot-hour probability ``rate``."""
        if rate >= 1.0:
            return 0.0
        hazard = -math.log1p(-rate)  # per hour
        return self.rng.expovariate(hazard) * 3600.0

    # -- state queries ---------------------------------------------------------

    def occupancy(self, class_id: str) -> int:
        return sum(1 for s in self._live if s.class_id == class_id)

    def alive_slots(self) -> dict[str, int]:
        counts = {c: 0 for c in sorted(self.providers)}
        for s in self._live:
            if s.state in (IDLE, BUSY):
                counts[s.class_id] += 1
        return counts

    def committed(self, kind: str) -> float:
        return sum(
            max(0.0, s.max_charge - s.charged)
            for s in self._live
            if self.providers[s.class_id].kind == kind
        )

    def funds_available(self) -> float:
        return max(0.0, self.scenario.initial_funds - self.ledger.cloud_spend - self.committed("cloud"))

    def allocation_available(self) -> float:
        return max(
            0.0, self.scenario.initial_allocation - self.ledger.hpc_hours_used - self.committed("hpc")
        )

    def set_provider_state(self, class_id: str, up: bool) -> None:
        self.up[class_id] = bool(up)

    def job_counts(self) -> dict[str, int]:
        return {
            "total": self.scenario.total_jobs,
            "released": len(self.jobs),
            "queued": self.queued,
            "running": self.running,
            "completed": self.completed,
            "preemptions": self.preemptions,
        }

    # -- adapter surface -------------------------------------------------------

    def queue_query(self) -> list[dict[str, Any]]:
        if self._queue_cache is None:
            self._queue_cache = [
                {"requirements": dict(j.requirements), "preferred_resources": list(j.preferred)}
                for j in self.jobs
                if j.state == "queued"
            ]
        return self._queue_cache

    def manifest_query(self) -> list[dict[str, Any]]:
        out = []
        for c in sorted(self.providers):
            p = self.providers[c]
            out.append(
                {
                    "class_id": c,
                    "kind": p.kind,
                    "price_performance": p.price_performance,
                    "unit_cost": p.unit_cost,
                    "capacity_limit": p.capacity,
                    "current_occupancy": self.occupancy(c),
                    "state": "up" if self.up[c] else "down",
                }
            )
        return out

    def budget_query(self) -> dict[str, float]:
        """Ledger balances, plus what is left once live slots' reservations are paid."""
        return {
            "cloud_funds_remaining": max(0.0, self.scenario.initial_funds - self.ledger.cloud_spend),
            "hpc_allocation_remaining": max(
                0.0, self.scenario.initial_allocation - self.ledger.hpc_hours_used
            ),
            "cloud_funds_uncommitted": self.funds_available(),
            "hpc_allocation_uncommitted": self.allocation_available(),
        }

    def provision_submit(self, request: Mapping[str, Any]) -> dict[str, Any]:
        """Ask for ``slots`` pending-or-idle slots for ``for_bundle`` at ``class_id``.

        Requests are targets, not increments: only the shortfall against
        slots already waiting for the same bundle is created.
        """
        cid = request.get("class_id")
        bundle = request.get("for_bundle")
        receipt = {"class_id": cid, "for_bundle": bundle, "slots": request.get("slots"), "new_slots": 0}
        if cid not in self.providers:
            return {**receipt, "accepted": False, "reason": f"unknown resource class {cid}"}
        if not self.up[cid]:
            return {**receipt, "accepted": False, "reason": f"{cid} is down"}
        slots = request.get("slots")
        if not isinstance(slots, int) or isinstance(slots, bool) or slots < 1:
            return {**receipt, "accepted": False, "reason": "slots must be a positive integer"}
        spec = self.providers[cid]
        waiting = sum(
            1 for s in self._live if s.class_id == cid and s.bundle == bundle and s.state in (PENDING, IDLE)
        )
        new = slots - waiting
        if new <= 0:
            return {**receipt, "accepted": True, "reason": "already satisfied"}
        free = spec.capacity - self.occupancy(cid)
        if new > free:
            return {**receipt, "accepted": False, "reason": f"exceeds remaining capacity ({free} free)"}
        wall = float(request.get("wall_hours", 1.0))
        lease = wall + self.scenario.idle_timeout / 3600.0
        per_slot = spec.unit_cost * lease
        if spec.kind == "cloud" and new * per_slot > self.funds_available() + EPS:
            return {**receipt, "accepted": False, "reason": "insufficient cloud funds"}
        if spec.kind == "hpc" and new * per_slot > self.allocation_available() + EPS:
            return {**receipt, "accepted": False, "reason": "insufficient hpc allocation"}
        now = self.t
        for _ in range(new):
            slot = Slot(
                slot_id=self._next_slot,
                class_id=cid,
                bundle=bundle,
                created_at=now,
                ready_at=now + spec.startup_latency,
                lease_wall_hours=wall,
                max_charge=per_slot if spec.kind != "grid" else 0.0,
            )
            self._next_slot += 1
            self.slots[slot.slot_id] = slot
            self._live.append(slot)
        return {**receipt, "accepted": True, "reason": "", "new_slots": new}

    def query_slots(self) -> dict[str, int]:
        return self.alive_slots()


class SimAdapters:
    """The facility's external APIs as seen by the engine's plugins.

    Calls are serialized with the simulation step so the engine may call
    them from its own threads.
    """

    def __init__(self, sim: FacilitySim, lock: threading.RLock | None = None) -> None:
        self.sim = sim
        self.lock = lock or threading.RLock()
        self.available = True

    def _check(self) -> None:
        if not self.available:
            raise AdapterUnavailable("facility endpoint unreachable")

    def queue_query(self) -> list[dict[str, Any]]:
        with self.lock:
            self._check()
            return self.sim.queue_query()

    def manifest_query(self) -> list[dict[str, Any]]:
        with self.lock:
            self._check()
            return self.sim.manifest_query()

    def budget_query(self) -> dict[str, float]:
        with self.lock:
            self._check()
            return self.sim.budget_query()

    def submit(self, request: Mapping[str, Any]) -> dict[str, Any]:
        with self.lock:
            self._check()
            return self.sim.provision_submit(request)

    provision_submit = submit

    def query_slots(self) -> dict[str, int]:
        with self.lock:
            self._check()
            return self.sim.query_slots()
