"""Plugin registry.

A plugin is a factory ``factory(parameters, services) -> module`` where the
returned module exposes ``invoke(inputs) -> mapping of product name to
value``. Sources receive an empty input map; publishers may return an
empty map. ``services`` carries shared endpoints such as adapters to
external systems.

A factory may expose ``check_parameters(parameters) -> list[str]`` so that
configuration validation can reject bad parameters without building the
module.
"""

from __future__ import annotations

from typing import Any, Callable, Mapping, Protocol

from .errors import ParameterError, UnknownPlugin


class Module(Protocol):
    def invoke(self, inputs: Mapping[str, Any]) -> Mapping[str, Any]: ...


Factory = Callable[[Mapping[str, Any], Mapping[str, Any]], Module]


class PluginRegistry:
    def __init__(self, services: Mapping[str, Any] | None = None) -> None:
        self._factories: dict[str, Factory] = {}
        self.services: dict[str, Any] = dict(services or {})

    def register(self, name: str, factory: Factory | None = None):
        """Register ``factory`` under ``name``; usable as a decorator."""

        def deco(f: Factory) -> Factory:
            if name in self._factories:
                raise ValueError(f"plugin {name!r} already registered")
            self._factories[name] = f
            return f

        return deco(factory) if factory is not None else deco

    def __contains__(self, name: object) -> bool:
        return name in self._factories

    def names(self) -> list[str]:
        return sorted(self._factories)

    def check(self, name: str, parameters: Mapping[str, Any]) -> list[str]:
        if name not in self._factories:
            return [f"unknown plugin {name!r}"]
        checker = getattr(self._factories[name], "check_parameters", None)
        return list(checker(parameters)) if checker else []

    def create(self, name: str, parameters: Mapping[str, Any]) -> Module:
        try:
            factory = self._factories[name]
        except KeyError:
            raise UnknownPlugin(name) from None
        problems = self.check(name, parameters)
        if problems:
            raise ParameterError(f"{name}: " + "; ".join(problems))
        try:
            module = factory(parameters, self.services)
        except ParameterError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"{name}: {exc}") from exc
        if not callable(getattr(module, "invoke", None)):
            raise ParameterError(f"{name}: factory did not return a module with invoke()")
        return module

    def copy(self, **services: Any) -> "PluginRegistry":
        other = PluginRegistry({**self.services, **services})
        other._factories = dict(self._factories)
        return other
