"""Provisioner adapters.

Per-site provisioners implement ``submit(request) -> receipt`` and
``query_slots() -> {class_id: running}``; the facility simulator's
adapters are one of these. :class:`CollapsedWorkerProvisioner` stands for
services that only accept a target worker count and a worker
configuration, with no per-site detail.
"""

from __future__ import annotations

from typing import Any, Mapping, Protocol


class ProvisionerAdapter(Protocol):
    def submit(self, request: Mapping[str, Any]) -> Mapping[str, Any]: ...

    def query_slots(self) -> Mapping[str, int]: ...


class CollapsedWorkerProvisioner:
    """Stub of a virtual-cluster service: one target worker count per request."""

    def __init__(self, max_workers: int = 1000) -> None:
        self.max_workers = max_workers
        self.requests: list[dict[str, Any]] = []
        self.target = 0

    def request_workers(self, target_workers: int, worker_config: Mapping[str, Any]) -> dict[str, Any]:
        entry = {"target_workers": int(target_workers), "worker_config": dict(worker_config)}
        self.requests.append(entry)
        if target_workers > self.max_workers:
            return {**entry, "accepted": False, "reason": f"exceeds {self.max_workers} workers"}
        self.target = int(target_workers)
        return {**entry, "accepted": True, "reason": ""}

    def query_slots(self) -> dict[str, int]:
        return {"virtual_cluster": self.target}
