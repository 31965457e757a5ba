"""Even splitting of slot requests across eligible resource classes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping


def even_split(n: int, class_ids: Iterable[str]) -> dict[str, int]:
    """Split ``n`` slots as evenly as possible, extra slots to the lowest ids.

    This is the largest-remainder method with equal weights: every class
    gets ``n // k`` and the first ``n % k`` classes in ascending id order
    get one more.
    """
    ids = sorted(class_ids)
    if not ids:
        return {}
    base, extra = divmod(n, len(ids))
    return {c: base + (1 if i < extra else 0) for i, c in enumerate(ids)}


@dataclass(frozen=True)
class SplitResult:
    shares: dict[str, int]
    iterations: int
    rejected: tuple[str, ...]
    clamped: tuple[str, ...]


def split_with_limits(
    target: int,
    class_ids: Iterable[str],
    affordable: Callable[[str, int], bool],
    headroom: Mapping[str, int],
) -> SplitResult:
    """Even split that drops unaffordable classes and clamps to headroom.

    A class whose share fails ``affordable`` gets nothing; a class whose
    share exceeds its headroom is pinned at the headroom. Either way the
    remainder is re-split among the classes still in play, until nothing
    changes. Each redistribution removes at least one class, so the loop
    runs at most ``k`` redistributions for ``k`` classes.
    """
    pool = sorted(set(class_ids))
    shares: dict[str, int] = {}
    rejected: list[str] = []
    clamped: list[str] = []
    remaining = max(0, target)
    iterations = 0
    while True:
        trial = even_split(remaining, pool)
        failing = [c for c in pool if trial[c] > 0 and not affordable(c, trial[c])]
        if failing:
            for c in failing:
                shares[c] = 0
                pool.remove(c)
            rejected.extend(failing)
            iterations += 1
            continue
        over = [c for c in pool if trial[c] > headroom.get(c, 0)]
        if over:
            for c in over:
                shares[c] = max(0, headroom.get(c, 0))
                remaining -= shares[c]
                pool.remove(c)
            clamped.extend(over)
            iterations += 1
            continue
        shares.update(trial)
        break
    return SplitResult(dict(sorted(shares.items())), iterations, tuple(rejected), tuple(clamped))
