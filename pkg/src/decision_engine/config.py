"""Loading and validating engine configuration files.

Configuration is TOML. See ``docs/config.md`` for the schema; in short an
``[engine]`` table followed by one ``[[channels]]`` entry per decision
channel, each holding arrays of ``sources``, ``source_proxies``,
``transforms``, ``facts``, ``rules`` and ``publishers``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import tomli

from .errors import ConfigInvalid, ConfigParseError, ExpressionError, FrameworkError
from .framework import transform_order
from .logic import FACT_PRODUCT_PREFIX, Fact, Rule, check_rules, parse_expression
from .logic.expressions import product_refs
from .model import (
    FRAMEWORK_PRODUCTS,
    PUBLISHER,
    SOURCE,
    TRANSFORM,
    ChannelConfig,
    Defaults,
    EngineConfig,
    ModuleSpec,
    SourceProxyBinding,
)
from .plugins import PluginRegistry


@dataclass(frozen=True, order=True)
class ValidationProblem:
    channel: str
    location: str
    message: str

    def __str__(self) -> str:
        where = f"{self.channel}: " if self.channel else ""
        loc = f"{self.location}: " if self.location else ""
        return f"{where}{loc}{self.message}"


@dataclass(frozen=True)
class ValidatedConfig:
    config: EngineConfig


# --------------------------------------------------------------------------
# parsing


class _Reader:
    def __init__(self) -> None:
        self.errors: list[str] = []

    def table(self, raw: Any, where: str) -> Mapping[str, Any]:
        if raw is None:
            return {}
        if not isinstance(raw, Mapping):
            self.errors.append(f"{where}: expected a table")
            return {}
        return raw

    def tables(self, raw: Any, where: str) -> list[Mapping[str, Any]]:
        if raw is None:
            return []
        if not isinstance(raw, list) or not all(isinstance(r, Mapping) for r in raw):
            self.errors.append(f"{where}: expected an array of tables")
            return []
        return raw

    def string(self, raw: Mapping[str, Any], key: str, where: str, default: str | None = None) -> str:
        value = raw.get(key, default)
        if not isinstance(value, str) or not value:
            self.errors.append(f"{where}: '{key}' must be a non-empty string")
            return default or ""
        return value

    def names(self, raw: Mapping[str, Any], key: str, where: str) -> tuple[str, ...]:
        value = raw.get(key, [])
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list) or not all(isinstance(v, str) and v for v in value):
            self.errors.append(f"{where}: '{key}' must be a list of names")
            return ()
        return tuple(value)

    def number(self, raw: Mapping[str, Any], key: str, where: str, default: float | None) -> float | None:
        value = raw.get(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.errors.append(f"{where}: '{key}' must be a number")
            return default
        return float(value)


def _module(r: _Reader, raw: Mapping[str, Any], kind: str, where: str) -> ModuleSpec:
    name = r.string(raw, "name", where, default="?")
    where = f"{where} {name!r}"
    params = r.table(raw.get("parameters"), f"{where} parameters")
    return ModuleSpec(
        kind=kind,
        name=name,
        plugin=r.string(raw, "plugin", where, default="?"),
        parameters=dict(params),
        consumes=r.names(raw, "consumes", where),
        produces=r.names(raw, "produces", where),
        period=r.number(raw, "period", where, None) if kind == SOURCE else None,
    )


def parse_config(raw: Mapping[str, Any], source_path: Path | None = None) -> EngineConfig:
    """Build an :class:`EngineConfig` from already-decoded TOML data."""
    r = _Reader()
    engine = r.table(raw.get("engine"), "engine")
    mode = engine.get("mode", "live")
    if mode not in ("live", "simulation"):
        r.errors.append("engine: 'mode' must be 'live' or 'simulation'")
        mode = "live"
    base = Defaults(source_period=10.0 if mode == "simulation" else 30.0)
    d = r.table(engine.get("defaults"), "engine.defaults")
    defaults = Defaults(
        source_period=r.number(d, "source_period", "engine.defaults", base.source_period),
        boot_timeout=r.number(d, "boot_timeout", "engine.defaults", base.boot_timeout),
        stop_grace=r.number(d, "stop_grace", "engine.defaults", base.stop_grace),
    )
    archive_dir = Path(engine.get("archive_dir", "archive"))
    if source_path is not None and not archive_dir.is_absolute():
        archive_dir = source_path.parent / archive_dir
    control_socket = Path(engine.get("control_socket", "decision-engine.sock"))
    if source_path is not None and not control_socket.is_absolute():
        control_socket = source_path.parent / control_socket

    channels = []
    for i, ch in enumerate(r.tables(raw.get("channels"), "channels")):
        cid = r.string(ch, "id", f"channels[{i}]", default=f"channels[{i}]")
        at = f"channel {cid!r}"
        sources = tuple(_module(r, s, SOURCE, f"{at} source") for s in r.tables(ch.get("sources"), at))
        transforms = tuple(
            _module(r, t, TRANSFORM, f"{at} transform") for t in r.tables(ch.get("transforms"), at)
        )
        publishers = tuple(
            _module(r, p, PUBLISHER, f"{at} publisher") for p in r.tables(ch.get("publishers"), at)
        )
        proxies = []
        for p in r.tables(ch.get("source_proxies"), at):
            name = r.string(p, "name", f"{at} source_proxy", default="?")
            w = f"{at} source_proxy {name!r}"
            product = r.string(p, "product", w, default="?")
            proxies.append(
                SourceProxyBinding(
                    name=name,
                    source_channel=r.string(p, "channel", w, default="?"),
                    product_name=product,
                    local_alias=p.get("alias", product) if isinstance(p.get("alias", product), str) else product,
                    max_staleness=r.number(p, "max_staleness", w, float("inf")),
                    period=r.number(p, "period", w, None),
                )
            )
        facts = []
        for f in r.tables(ch.get("facts"), at):
            name = r.string(f, "name", f"{at} fact", default="?")
            text = r.string(f, "expr", f"{at} fact {name!r}", default="")
            if not text:
                continue
            try:
                facts.append(Fact.parse(name, text))
            except ExpressionError as exc:
                r.errors.append(f"{at} fact {name!r}: {exc}")
        rules = []
        for rr in r.tables(ch.get("rules"), at):
            name = r.string(rr, "name", f"{at} rule", default="?")
            w = f"{at} rule {name!r}"
            text = r.string(rr, "condition", w, default="")
            if not text:
                continue
            try:
                rules.append(
                    Rule.parse(name, text, r.names(rr, "actions", w), r.names(rr, "derived_facts", w))
                )
            except ExpressionError as exc:
                r.errors.append(f"{w}: {exc}")
        channels.append(
            ChannelConfig(cid, sources, tuple(proxies), transforms, tuple(facts), tuple(rules), publishers)
        )
    if r.errors:
        raise ConfigParseError("\n".join(r.errors))
    return EngineConfig(tuple(channels), archive_dir, defaults, mode, source_path, control_socket)


def load_config(path: str | Path) -> EngineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc}") from exc
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    return parse_config(raw, path)


# --------------------------------------------------------------------------
# validation


def _produced(cfg: ChannelConfig) -> dict[str, list[str]]:
    producers: dict[str, list[str]] = {}
    for s in cfg.sources:
        for p in s.produces:
            producers.setdefault(p, []).append(s.name)
    for px in cfg.source_proxies:
        producers.setdefault(px.local_alias, []).append(px.name)
    for t in cfg.transforms:
        for p in t.produces:
            producers.setdefault(p, []).append(t.name)
    return producers


def _check_channel(
    cfg: ChannelConfig,
    channels: Mapping[str, ChannelConfig],
    registry: PluginRegistry | None,
) -> list[ValidationProblem]:
    out: list[ValidationProblem] = []
    cid = cfg.channel_id

    def add(location: str, message: str) -> None:
        out.append(ValidationProblem(cid, location, message))

    if not (cfg.sources or cfg.source_proxies):
        add("channel", "needs at least one source or source proxy")
    for label, items in (
        ("transform", cfg.transforms),
        ("fact", cfg.facts),
        ("rule", cfg.rules),
        ("publisher", cfg.publishers),
    ):
        if not items:
            add("channel", f"needs at least one {label}")

    seen: set[str] = set()
    for name in [*(m.name for m in cfg.modules()), *(p.name for p in cfg.source_proxies)]:
        if name in seen:
            add(f"module {name}", "duplicate module name")
        seen.add(name)

    for s in cfg.sources:
        if s.consumes:
            add(f"source {s.name}", "sources cannot consume products")
        if not s.produces:
            add(f"source {s.name}", "source declares no products")
        if s.period is not None and s.period <= 0:
            add(f"source {s.name}", "period must be positive")
    for p in cfg.publishers:
        if p.produces:
            add(f"publisher {p.name}", "publishers cannot declare produced products")
    for t in cfg.transforms:
        if not t.produces:
            add(f"transform {t.name}", "transform declares no products")
        if not t.consumes:
            add(f"transform {t.name}", "transform declares no inputs")

    producers = _produced(cfg)
    for product, who in sorted(producers.items()):
        if len(who) > 1:
            add(f"product {product}", f"produced by more than one module: {', '.join(who)}")
        if product in FRAMEWORK_PRODUCTS or product.startswith(FACT_PRODUCT_PREFIX):
            add(f"product {product}", "name is reserved for framework products")

    available = set(producers) | {"cycle"}
    cycle_products = available | {"inference_result"} | {
        FACT_PRODUCT_PREFIX + n for n in [*(f.name for f in cfg.facts), *(d for r in cfg.rules for d in r.derived_facts)]
    }
    for t in cfg.transforms:
        for c in t.consumes:
            if c not in available:
                add(f"transform {t.name}", f"unproduced product {c}")
    for p in cfg.publishers:
        for c in p.consumes:
            if c not in cycle_products:
                add(f"publisher {p.name}", f"unproduced product {c}")
    for f in cfg.facts:
        for c in sorted(product_refs(f.expr)):
            if c not in available:
                add(f"fact {f.name}", f"unproduced product {c}")

    try:
        transform_order(cfg.transforms)
    except FrameworkError as exc:
        add("transforms", str(exc))

    _, rule_problems = check_rules(cfg.facts, cfg.rules, [p.name for p in cfg.publishers])
    for problem in rule_problems:
        add("rules", str(problem))

    for px in cfg.source_proxies:
        loc = f"source_proxy {px.name}"
        if px.source_channel == cid:
            add(loc, "a proxy cannot read from its own channel")
        elif px.source_channel not in channels:
            add(loc, f"unknown channel {px.source_channel}")
        else:
            target = channels[px.source_channel]
            if px.product_name not in _produced(target):
                add(loc, f"channel {px.source_channel} does not produce {px.product_name}")
        if px.max_staleness <= 0:
            add(loc, "max_staleness must be positive")

    if registry is not None:
        for m in cfg.modules():
            for msg in registry.check(m.plugin, m.parameters):
                add(f"{m.kind} {m.name}", msg)
    return out


def validate_config(cfg: EngineConfig, registry: PluginRegistry | None = None) -> list[ValidationProblem]:
    """Every structural problem in ``cfg``, ordered by (channel, location).

    An empty list means every channel will assemble.
    """
    problems: list[ValidationProblem] = []
    by_id: dict[str, ChannelConfig] = {}
    for c in cfg.channels:
        if c.channel_id in by_id:
            problems.append(ValidationProblem("", "channels", f"duplicate channel id {c.channel_id}"))
        else:
            by_id[c.channel_id] = c
    if not cfg.channels:
        problems.append(ValidationProblem("", "channels", "no channels configured"))
    for c in cfg.channels:
        problems.extend(_check_channel(c, by_id, registry))
    return sorted(problems, key=lambda p: (p.channel, p.location))


def ensure_valid(cfg: EngineConfig, registry: PluginRegistry | None = None) -> ValidatedConfig:
    problems = validate_config(cfg, registry)
    if problems:
        raise ConfigInvalid(problems)
    return ValidatedConfig(cfg)
