"""Publishers: provisioning requests and per-cycle metrics."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Any, Mapping

from ..errors import ParameterError
from .transforms import _value

STYLES = ("per_site", "collapsed")


class ProvisionPublisher:
    """Submit the allocation plan to a provisioner and report receipts.

    ``style = "per_site"`` sends every request as is. ``style = "collapsed"``
    sums the plan into one target worker count for services that do their
    own placement.
    """

    def __init__(self, parameters: Mapping[str, Any], services: Mapping[str, Any]) -> None:
        name = parameters.get("endpoint", "sim")
        endpoints = services.get("endpoints", {})
        if name not in endpoints:
            raise ParameterError(f"no endpoint named {name!r}")
        self.adapter = endpoints[name]
        self.style = parameters.get("style", "per_site")
        self.worker_config = dict(parameters.get("worker_config", {}))
        if self.style == "collapsed" and not hasattr(self.adapter, "request_workers"):
            raise ParameterError(f"endpoint {name!r} does not accept collapsed requests")

    @classmethod
    def check_parameters(cls, parameters: Mapping[str, Any]) -> list[str]:
        problems = []
        if parameters.get("style", "per_site") not in STYLES:
            problems.append(f"'style' must be one of {', '.join(STYLES)}")
        if not isinstance(parameters.get("worker_config", {}), Mapping):
            problems.append("'worker_config' must be a table")
        return problems

    def invoke(self, inputs: Mapping[str, Any]) -> dict[str, Any]:
        plan = _value(inputs["allocation_plan"])
        fired = []
        if "inference_result" in inputs:
            fired = list(_value(inputs["inference_result"])["fired_rules"])
        if self.style == "collapsed":
            total = sum(int(r["slots"]) for r in plan)
            if total == 0:
                return {"provision_receipts": []}
            receipt = self.adapter.request_workers(total, self.worker_config)
            return {"provision_receipts": [{**receipt, "fired_rules": fired}]}
        receipts = []
        for request in plan:
            try:
                r = self.adapter.submit(request)
                receipt = {
                    "class_id": request["class_id"],
                    "for_bundle": request["for_bundle"],
                    "slots": request["slots"],
                    "accepted": bool(r.get("accepted")),
                    "reason": str(r.get("reason", "")),
                }
            except Exception as exc:  # one bad request must not sink the rest
                receipt = {
                    "class_id": request["class_id"],
                    "for_bundle": request["for_bundle"],
                    "slots": request["slots"],
                    "accepted": False,
                    "reason": f"{type(exc).__name__}: {exc}",
                }
            receipt["fired_rules"] = fired
            receipts.append(receipt)
        return {"provision_receipts": receipts}


def _fmt(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return f"{x:.6f}"


class MetricsPublisher:
    """Append one CSV row per cycle to ``<directory>/<channel>.csv``."""

    def __init__(self, parameters: Mapping[str, Any], services: Mapping[str, Any]) -> None:
        base = Path(services.get("output_dir", "."))
        directory = Path(parameters.get("directory", "metrics"))
        self.directory = directory if directory.is_absolute() else base / directory
        self.epoch = float(services.get("epoch", 0.0))
        self.classes = list(parameters.get("classes", []))
        self._started: set[Path] = set()

    @classmethod
    def check_parameters(cls, parameters: Mapping[str, Any]) -> list[str]:
        if not isinstance(parameters.get("directory", "metrics"), str):
            return ["'directory' must be a string"]
        return []

    def path_for(self, channel: str) -> Path:
        return self.directory / f"{channel}.csv"

    def invoke(self, inputs: Mapping[str, Any]) -> dict[str, Any]:
        cycle = _value(inputs["cycle"])
        jobs = _value(inputs["idle_jobs"])
        slots = _value(inputs["running_slots"])
        budget = _value(inputs["budget"])
        if not self.classes:
            self.classes = sorted(slots)
        path = self.path_for(cycle["channel"])
        row = [
            _fmt(round(cycle["started_at"] - self.epoch, 6)),
            str(cycle["generation"]),
            str(sum(int(b["count"]) for b in jobs)),
            *(str(int(slots.get(c, 0))) for c in self.classes),
            _fmt(round(budget["cloud_funds_remaining"], 6)),
            _fmt(round(budget["hpc_allocation_remaining"], 6)),
        ]
        fresh = path not in self._started
        if fresh:
            path.parent.mkdir(parents=True, exist_ok=True)
            self._started.add(path)
        with open(path, "w" if fresh else "a", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if fresh:
                writer.writerow(
                    ["sim_time", "generation", "idle_jobs_total"]
                    + [f"slots_{c}" for c in self.classes]
                    + ["funds_remaining", "allocation_remaining"]
                )
            writer.writerow(row)
        return {}
