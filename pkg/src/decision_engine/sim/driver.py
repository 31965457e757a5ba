"""Co-simulation driver: the facility and the engine share one simulated clock.

Each tick polls every channel (running whichever sources are due, then any
pending cycle) and then advances the facility by one step.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from ..errors import ScenarioTimeout
from ..framework import Engine
from ..model import EngineConfig
from ..plugins import PluginRegistry
from .facility import FacilitySim, SimAdapters
from .scenario import SimScenario

EPS = 1e-9


@dataclass
class RunReport:
    scenario: str
    outcome: str
    jobs_total: int
    jobs_completed: int
    jobs_running: int
    jobs_queued: int
    preemptions: int
    peak_slots: dict[str, int]
    cloud_spend: float
    hpc_hours_used: float
    initial_funds: float
    initial_allocation: float
    slot_hours: dict[str, float]
    cycles: dict[str, int]
    cycle_outcomes: dict[str, dict[str, int]]
    sim_time: float
    metrics_csv: dict[str, str] = field(default_factory=dict)

    @property
    def residue(self) -> dict[str, int]:
        return {"queued": self.jobs_queued, "running": self.jobs_running}

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        lines = [
            f"scenario        {self.scenario}",
            f"outcome         {self.outcome}",
            f"jobs completed  {self.jobs_completed} / {self.jobs_total}"
            f" (queued {self.jobs_queued}, running {self.jobs_running})",
            f"preemptions     {self.preemptions}",
            f"sim time        {self.sim_time:g} s",
            f"cloud spend     {self.cloud_spend:.4f} of {self.initial_funds:g}",
            f"hpc hours used  {self.hpc_hours_used:.4f} of {self.initial_allocation:g}",
            "peak slots      " + ", ".join(f"{c}={n}" for c, n in self.peak_slots.items()),
            "cycles          " + ", ".join(f"{c}={n}" for c, n in self.cycles.items()),
        ]
        for channel, path in self.metrics_csv.items():
            lines.append(f"metrics         {channel}: {path}")
        return "\n".join(lines)


def _services(adapters: SimAdapters, output_dir: Path, scenario: SimScenario) -> dict[str, Any]:
    return {"endpoints": {"sim": adapters}, "output_dir": output_dir, "epoch": scenario.epoch}


def run_scenario(
    scenario: SimScenario,
    engine_config: EngineConfig,
    output_dir: str | Path,
    registry: PluginRegistry | None = None,
    archive_dir: str | Path | None = None,
    duration: float | None = None,
) -> RunReport:
    """Drive ``scenario`` and the engine together until all jobs finish.

    Raises :class:`ScenarioTimeout` (carrying the report) if jobs remain
    when the duration runs out.
    """
    from ..stdlib import standard_registry

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    archive_dir = Path(archive_dir) if archive_dir is not None else output_dir / "archive"
    duration = scenario.duration if duration is None else duration

    sim = FacilitySim(scenario)
    adapters = SimAdapters(sim)
    services = _services(adapters, output_dir, scenario)
    registry = standard_registry(services) if registry is None else registry.copy(**services)
    engine = Engine(engine_config, registry, clock=sim.clock, archive_dir=archive_dir)
    engine.start_simulated()

    while True:
        engine.poll()
        if sim.all_done() or sim.t >= duration - EPS:
            break
        sim.step(min(scenario.step, duration - sim.t))
    engine.stop()

    report = _report(scenario, sim, engine, "completed" if sim.all_done() else "timeout")
    if report.outcome == "timeout":
        raise ScenarioTimeout(
            f"{report.jobs_total - report.jobs_completed} jobs unfinished after {sim.t:g} s",
            report,
        )
    return report


def _report(scenario: SimScenario, sim: FacilitySim, engine: Engine, outcome: str) -> RunReport:
    cycles = {cid: ch.cycle_count for cid, ch in sorted(engine.channels.items())}
    outcomes: dict[str, dict[str, int]] = {}
    metrics: dict[str, str] = {}
    for cid, ch in sorted(engine.channels.items()):
        counts: dict[str, int] = {}
        for o in ch.outcomes:
            counts[o.outcome] = counts.get(o.outcome, 0) + 1
        outcomes[cid] = dict(sorted(counts.items()))
        for module in ch.modules.values():
            path_for = getattr(module, "path_for", None)
            if path_for is not None and path_for(cid).exists():
                metrics[cid] = str(path_for(cid))
    counts = sim.job_counts()
    return RunReport(
        scenario=scenario.name,
        outcome=outcome,
        jobs_total=scenario.total_jobs,
        jobs_completed=counts["completed"],
        jobs_running=counts["running"],
        jobs_queued=counts["queued"] + (scenario.total_jobs - counts["released"]),
        preemptions=counts["preemptions"],
        peak_slots=dict(sim.peak_slots),
        cloud_spend=sim.ledger.cloud_spend,
        hpc_hours_used=sim.ledger.hpc_hours_used,
        initial_funds=scenario.initial_funds,
        initial_allocation=scenario.initial_allocation,
        slot_hours=dict(sorted(sim.ledger.slot_hours.items())),
        cycles=cycles,
        cycle_outcomes=outcomes,
        sim_time=sim.t,
        metrics_csv=metrics,
    )
