"""Declarative description of channels and the engine."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .logic import Fact, Rule

SOURCE, SOURCE_PROXY, TRANSFORM, PUBLISHER = "source", "source_proxy", "transform", "publisher"
MODULE_KINDS = (SOURCE, SOURCE_PROXY, TRANSFORM, PUBLISHER)

# products the framework itself writes into every cycle
CYCLE_PRODUCT = "cycle"
FRAMEWORK_PRODUCTS = frozenset({CYCLE_PRODUCT, "inference_result"})


@dataclass(frozen=True)
class ModuleSpec:
    kind: str
    name: str
    plugin: str
    parameters: Mapping[str, Any] = field(default_factory=dict)
    consumes: tuple[str, ...] = ()
    produces: tuple[str, ...] = ()
    period: float | None = None


@dataclass(frozen=True)
class SourceProxyBinding:
    name: str
    source_channel: str
    product_name: str
    local_alias: str
    max_staleness: float
    period: float | None = None


@dataclass(frozen=True)
class ChannelConfig:
    channel_id: str
    sources: tuple[ModuleSpec, ...] = ()
    source_proxies: tuple[SourceProxyBinding, ...] = ()
    transforms: tuple[ModuleSpec, ...] = ()
    facts: tuple[Fact, ...] = ()
    rules: tuple[Rule, ...] = ()
    publishers: tuple[ModuleSpec, ...] = ()

    def modules(self) -> list[ModuleSpec]:
        return [*self.sources, *self.transforms, *self.publishers]


@dataclass(frozen=True)
class Defaults:
    source_period: float = 30.0
    boot_timeout: float = 120.0
    stop_grace: float = 30.0


SIMULATION_DEFAULTS = Defaults(source_period=10.0)


@dataclass(frozen=True)
class EngineConfig:
    channels: tuple[ChannelConfig, ...]
    archive_dir: Path = Path("archive")
    defaults: Defaults = Defaults()
    mode: str = "live"
    source_path: Path | None = None
    control_socket: Path = Path("decision-engine.sock")

    def channel(self, channel_id: str) -> ChannelConfig:
        for c in self.channels:
            if c.channel_id == channel_id:
                return c
        raise KeyError(channel_id)
