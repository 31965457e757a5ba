"""JSON value model for data products.

Product values are restricted to what round-trips through JSON: ``None``,
booleans, finite numbers, strings, lists and string-keyed records. Stored
values are frozen so that a consumer can never mutate what another module
(or the archive) sees.
"""

from __future__ import annotations

import json
import math
from typing import Any

from .errors import InvalidValue


class FrozenDict(dict):
    """A ``dict`` that refuses mutation. Still serializes as a JSON object."""

    def _immutable(self, *args, **kwargs):
        raise TypeError("product values are immutable")

    __setitem__ = __delitem__ = _immutable
    clear = pop = popitem = setdefault = update = _immutable  # type: ignore[assignment]

    def __ior__(self, other):
        raise TypeError("product values are immutable")

    def __reduce__(self):
        return (FrozenDict, (dict(self),))

    def __hash__(self) -> int:  # pragma: no cover - convenience only
        return hash(canonical_json(self))


def freeze(value: Any, _path: str = "$") -> Any:
    """Validate ``value`` against the JSON model and return a frozen copy."""
    if value is None or isinstance(value, (bool, str, FrozenDict)):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvalidValue(f"non-finite number at {_path}")
        return value
    if isinstance(value, (list, tuple)):
        return tuple(freeze(v, f"{_path}[{i}]") for i, v in enumerate(value))
    if isinstance(value, dict):
        out = {}
        for k, v in value.items():
            if not isinstance(k, str):
                raise InvalidValue(f"record key {k!r} at {_path} is not a string")
            out[k] = freeze(v, f"{_path}.{k}")
        return FrozenDict(out)
    raise InvalidValue(f"unsupported value type {type(value).__name__} at {_path}")


def thaw(value: Any) -> Any:
    """Plain mutable copy of a frozen value (lists and dicts)."""
    if isinstance(value, tuple):
        return [thaw(v) for v in value]
    if isinstance(value, dict):
        return {k: thaw(v) for k, v in value.items()}
    return value


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), allow_nan=False)
