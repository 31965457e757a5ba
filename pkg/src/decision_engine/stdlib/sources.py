"""Sources that poll the facility: job queue, resource manifest, budget, slots."""

from __future__ import annotations

import hashlib
from typing import Any, Mapping

from ..errors import ParameterError
from ..values import canonical_json


def bundle_id(requirements: Mapping[str, Any], preferred: list[str] | tuple[str, ...]) -> str:
    """Stable id for jobs sharing requirements and preferences."""
    key = canonical_json({"requirements": dict(requirements), "preferred": list(preferred)})
    return "b-" + hashlib.sha1(key.encode()).hexdigest()[:10]


def group_jobs(jobs: list[Mapping[str, Any]]) -> list[dict[str, Any]]:
    bundles: dict[str, dict[str, Any]] = {}
    for job in jobs:
        req = dict(job["requirements"])
        prefs = list(job["preferred_resources"])
        bid = bundle_id(req, prefs)
        entry = bundles.get(bid)
        if entry is None:
            bundles[bid] = {"bundle_id": bid, "count": 1, "requirements": req, "preferred_resources": prefs}
        else:
            entry["count"] += 1
    return [bundles[b] for b in sorted(bundles)]


class _EndpointSource:
    product = ""

    def __init__(self, parameters: Mapping[str, Any], services: Mapping[str, Any]) -> None:
        name = parameters.get("endpoint", "sim")
        endpoints = services.get("endpoints", {})
        if name not in endpoints:
            raise ParameterError(f"no endpoint named {name!r}")
        self.endpoint = endpoints[name]

    @classmethod
    def check_parameters(cls, parameters: Mapping[str, Any]) -> list[str]:
        endpoint = parameters.get("endpoint", "sim")
        return [] if isinstance(endpoint, str) and endpoint else ["'endpoint' must be a non-empty string"]


class JobQueueSource(_EndpointSource):
    """Idle jobs grouped into bundles of identical requirements and preferences."""

    def invoke(self, inputs: Mapping[str, Any]) -> dict[str, Any]:
        return {"idle_jobs": group_jobs(self.endpoint.queue_query())}


class ResourceManifestSource(_EndpointSource):
    def invoke(self, inputs: Mapping[str, Any]) -> dict[str, Any]:
        return {"resources": list(self.endpoint.manifest_query())}


class BudgetSource(_EndpointSource):
    def invoke(self, inputs: Mapping[str, Any]) -> dict[str, Any]:
        b = self.endpoint.budget_query()
        budget = {
            "cloud_funds_remaining": max(0.0, float(b["cloud_funds_remaining"])),
            "hpc_allocation_remaining": max(0.0, float(b["hpc_allocation_remaining"])),
        }
        for key in ("cloud_funds_uncommitted", "hpc_allocation_uncommitted"):
            if key in b:
                budget[key] = max(0.0, float(b[key]))
        return {"budget": budget}


class ProvisionerStatusSource(_EndpointSource):
    """Running slots per resource class, as reported by the provisioner."""

    def invoke(self, inputs: Mapping[str, Any]) -> dict[str, Any]:
        slots = self.endpoint.query_slots()
        return {"running_slots": {k: int(v) for k, v in sorted(slots.items())}}
