"""Standard library of provisioning plugins."""

from __future__ import annotations

from typing import Any, Mapping

from ..plugins import PluginRegistry
from .adapters import CollapsedWorkerProvisioner, ProvisionerAdapter
from .allocation import even_split, split_with_limits
from .publishers import MetricsPublisher, ProvisionPublisher
from .sources import (
    BudgetSource,
    JobQueueSource,
    ProvisionerStatusSource,
    ResourceManifestSource,
    bundle_id,
    group_jobs,
)
from .transforms import AllocateTransform, ShortlistTransform, allocate, shortlist

PLUGINS = {
    "job_queue": JobQueueSource,
    "resource_manifest": ResourceManifestSource,
    "budget": BudgetSource,
    "provisioner_status": ProvisionerStatusSource,
    "shortlist": ShortlistTransform,
    "allocate": AllocateTransform,
    "provision": ProvisionPublisher,
    "metrics": MetricsPublisher,
}


def standard_registry(services: Mapping[str, Any] | None = None) -> PluginRegistry:
    registry = PluginRegistry(services)
    for name, factory in PLUGINS.items():
        registry.register(name, factory)
    return registry


__all__ = [
    "PLUGINS",
    "AllocateTransform",
    "BudgetSource",
    "CollapsedWorkerProvisioner",
    "JobQueueSource",
    "MetricsPublisher",
    "ProvisionPublisher",
    "ProvisionerAdapter",
    "ProvisionerStatusSource",
    "ResourceManifestSource",
    "ShortlistTransform",
    "allocate",
    "bundle_id",
    "even_split",
    "group_jobs",
    "shortlist",
    "split_with_limits",
    "standard_registry",
]
