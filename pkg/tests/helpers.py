"""Small builders for channels made of callback plugins."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Callable, Mapping

from decision_engine.clock import ManualClock
from decision_engine.framework import Engine
from decision_engine.logic import Fact, Rule
from decision_engine.model import (
    PUBLISHER,
    SOURCE,
    TRANSFORM,
    ChannelConfig,
    Defaults,
    EngineConfig,
    ModuleSpec,
    SourceProxyBinding,
)
from decision_engine.plugins import PluginRegistry

Callback = Callable[[Mapping[str, Any]], Mapping[str, Any] | None]


class CallPlugin:
    """Module whose behaviour is a test callback looked up by key."""

    def __init__(self, parameters: Mapping[str, Any], services: Mapping[str, Any]) -> None:
        self.fn = services["callbacks"][parameters["fn"]]

    def invoke(self, inputs: Mapping[str, Any]) -> Mapping[str, Any] | None:
        return self.fn(inputs)


def registry(callbacks: dict[str, Callback], **services: Any) -> PluginRegistry:
    reg = PluginRegistry({"callbacks": callbacks, **services})
    reg.register("call", CallPlugin)
    return reg


def source(name: str, produces, fn: str | None = None, period: float | None = None) -> ModuleSpec:
    return ModuleSpec(SOURCE, name, "call", {"fn": fn or name}, (), tuple(produces), period)


def transform(name: str, consumes, produces, fn: str | None = None) -> ModuleSpec:
    return ModuleSpec(TRANSFORM, name, "call", {"fn": fn or name}, tuple(consumes), tuple(produces))


def publisher(name: str, consumes=(), fn: str | None = None) -> ModuleSpec:
    return ModuleSpec(PUBLISHER, name, "call", {"fn": fn or name}, tuple(consumes), ())


def proxy(name: str, channel: str, product: str, alias: str, max_staleness: float = float("inf")):
    return SourceProxyBinding(name, channel, product, alias, max_staleness)


def channel(
    cid: str,
    sources=(),
    transforms=(),
    facts: Mapping[str, str] | None = None,
    rules=(),
    publishers=(),
    proxies=(),
) -> ChannelConfig:
    """``rules`` items are (name, condition, actions[, derived_facts])."""
    fact_objs = tuple(Fact.parse(n, e) for n, e in (facts or {}).items())
    rule_objs = tuple(
        Rule.parse(r[0], r[1], r[2], r[3] if len(r) > 3 else ()) for r in rules
    )
    return ChannelConfig(
        cid, tuple(sources), tuple(proxies), tuple(transforms), fact_objs, rule_objs, tuple(publishers)
    )


def counting_channel(cid: str, callbacks: dict[str, Callback], log: list | None = None) -> ChannelConfig:
    """source -> doubling transform -> fact -> rule -> publisher, all healthy."""
    state = {"n": 0}

    def src(_):
        state["n"] += 1
        return {"x": state["n"]}

    def double(inputs):
        return {"y": inputs["x"].value * 2}

    def pub(inputs):
        if log is not None:
            log.append(inputs["y"].value)
        return {}

    callbacks.update({f"{cid}.src": src, f"{cid}.double": double, f"{cid}.pub": pub})
    return channel(
        cid,
        sources=[source("src", ["x"], f"{cid}.src")],
        transforms=[transform("double", ["x"], ["y"], f"{cid}.double")],
        facts={"positive": 'product("y") > 0'},
        rules=[("publish", 'fact("positive")', ["pub"])],
        publishers=[publisher("pub", ["y"], f"{cid}.pub")],
    )


def engine(
    channels,
    callbacks: dict[str, Callback],
    clock=None,
    archive_dir: Path | None = None,
    defaults: Defaults = Defaults(),
) -> Engine:
    cfg = EngineConfig(tuple(channels), archive_dir or Path("unused"), defaults)
    return Engine(cfg, registry(callbacks), clock=clock or ManualClock(0.0), archive_dir=archive_dir)
