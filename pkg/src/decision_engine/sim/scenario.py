from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Mapping

import tomli

from ..errors import ConfigParseError

KINDS = ("cloud", "hpc", "grid")


@dataclass(frozen=True)
class ProviderSpec:
    class_id: str
    kind: str
    capacity: int
    unit_cost: float = 0.0
    startup_latency: float = 0.0
    preemption_rate: float = 0.0
    price_performance: float = 1.0


@dataclass(frozen=True)
class JobWave:
    at: float
    count: int
    requirements: Mapping[str, Any]
    preferred_resources: tuple[str, ...]


@dataclass(frozen=True)
class SimScenario:
    name: str
    seed: int
    providers: tuple[ProviderSpec, ...]
    initial_funds: float
    initial_allocation: float
    job_waves: tuple[JobWave, ...]
    duration: float
    step: float = 10.0
    idle_timeout: float = 300.0
    epoch: float = 1514764800.0  # 2018-01-01T00:00:00Z

    @property
    def total_jobs(self) -> int:
        return sum(w.count for w in self.job_waves)

    def with_(self, **changes: Any) -> "SimScenario":
        return replace(self, **changes)


def _require(raw: Mapping[str, Any], key: str, where: str, errors: list[str], kind=None):
    if key not in raw:
        errors.append(f"{where}: missing '{key}'")
        return None
    value = raw[key]
    if kind is not None and (not isinstance(value, kind) or isinstance(value, bool)):
        errors.append(f"{where}: '{key}' has the wrong type")
        return None
    return value


def parse_scenario(raw: Mapping[str, Any]) -> SimScenario:
    errors: list[str] = []
    head = raw.get("scenario", {})
    providers = []
    for i, p in enumerate(raw.get("providers", [])):
        where = f"providers[{i}]"
        kind = p.get("kind")
        if kind not in KINDS:
            errors.append(f"{where}: kind must be one of {', '.join(KINDS)}")
        capacity = _require(p, "capacity", where, errors, int)
        providers.append(
            ProviderSpec(
                class_id=_require(p, "class_id", where, errors, str) or "?",
                kind=kind or "grid",
                capacity=capacity if capacity is not None else 0,
                unit_cost=float(p.get("unit_cost", 0.0)),
                startup_latency=float(p.get("startup_latency", 0.0)),
                preemption_rate=float(p.get("preemption_rate", 0.0)),
                price_performance=float(p.get("price_performance", 1.0)),
            )
        )
        if not 0.0 <= providers[-1].preemption_rate <= 1.0:
            errors.append(f"{where}: preemption_rate must lie in [0, 1]")
    known = {p.class_id for p in providers}
    waves = []
    for i, w in enumerate(raw.get("job_waves", [])):
        where = f"job_waves[{i}]"
        prefs = tuple(w.get("preferred_resources", ()))
        if not prefs:
            errors.append(f"{where}: preferred_resources must be non-empty")
        for c in prefs:
            if c not in known:
                errors.append(f"{where}: unknown resource class {c}")
        count = _require(w, "count", where, errors, int) or 0
        if count < 0:
            errors.append(f"{where}: count must be non-negative")
        req = dict(w.get("requirements", {}))
        req.setdefault("cpus", 1)
        req.setdefault("memory_mb", 2000)
        req.setdefault("wall_hours", 1.0)
        req["wall_hours"] = float(req["wall_hours"])
        waves.append(JobWave(float(w.get("at", 0.0)), count, req, prefs))
    epoch = head.get("epoch", 1514764800.0)
    if isinstance(epoch, str):
        epoch = datetime.fromisoformat(epoch).timestamp()
    elif isinstance(epoch, datetime):
        epoch = epoch.timestamp()
    if errors:
        raise ConfigParseError("\n".join(errors))
    return SimScenario(
        name=str(head.get("name", "scenario")),
        seed=int(head.get("seed", 0)),
        providers=tuple(providers),
        initial_funds=float(head.get("initial_funds", 0.0)),
        initial_allocation=float(head.get("initial_allocation", 0.0)),
        job_waves=tuple(waves),
        duration=float(head.get("duration", 86400.0)),
        step=float(head.get("step", 10.0)),
        idle_timeout=float(head.get("idle_timeout", 300.0)),
        epoch=float(epoch),
    )


def load_scenario(path: str | Path) -> SimScenario:
    path = Path(path)
    try:
        raw = tomli.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    return parse_scenario(raw)
