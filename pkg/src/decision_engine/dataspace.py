"""Versioned per-channel knowledge store.

Each channel owns one lineage of DataBlocks. Sources write into the open
block (``t_next``); a decision cycle takes a :meth:`SpaceHandle.snapshot`
(``t_curr``), adds its own cycle products to it, and finally locks and
archives it. Archives are append-only JSON-lines files, one per channel.
"""

from __future__ import annotations

import enum
import json
import logging
import threading
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterator, Mapping

from .clock import Clock, WallClock, isoformat
from .errors import (
    AlreadyArchived,
    BlockLocked,
    DataSpaceError,
    DuplicateChannel,
    DuplicateProducer,
    InvalidName,
    SpaceClosed,
    UnknownChannel,
    UnknownProduct,
)
from .values import canonical_json, freeze

log = logging.getLogger(__name__)

JOURNAL_LIMIT = 1000

OUTCOMES = ("success", "fact_error", "transform_error", "publisher_error")


class BlockState(str, enum.Enum):
    OPEN = "open"
    SNAPSHOTTED = "snapshotted"
    LOCKED_ARCHIVED = "locked_archived"


@dataclass(frozen=True)
class DataProduct:
    name: str
    value: Any
    produced_by: str
    produced_at: float | None = None
    generation: int = -1
    # set on products imported from another channel: {"channel": ..., "generation": ...}
    origin: Mapping[str, Any] | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.name, str) or not self.name:
            raise InvalidName("product name must be a non-empty string")
        object.__setattr__(self, "value", freeze(self.value))
        if self.origin is not None:
            object.__setattr__(self, "origin", freeze(dict(self.origin)))

    def to_archive(self) -> dict[str, Any]:
        entry = {
            "value": self.value,
            "produced_by": self.produced_by,
            "source_generation": self.generation,
        }
        if self.origin is not None:
            entry["origin"] = self.origin
        return entry

    @classmethod
    def from_archive(cls, name: str, entry: Mapping[str, Any]) -> "DataProduct":
        return cls(
            name=name,
            value=entry["value"],
            produced_by=entry["produced_by"],
            generation=entry["source_generation"],
            origin=entry.get("origin"),
        )


@dataclass(frozen=True)
class PutRecord:
    name: str
    produced_by: str
    generation: int
    produced_at: float
    replaced: bool
    value: Any


@dataclass(frozen=True)
class ArchiveRecord:
    channel: str
    generation: int
    outcome: str
    started_at: str
    ended_at: str
    products: Mapping[str, DataProduct]

    def to_dict(self) -> dict[str, Any]:
        return {
            "generation": self.generation,
            "channel": self.channel,
            "outcome": self.outcome,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "products": {n: p.to_archive() for n, p in self.products.items()},
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_json(cls, line: str) -> "ArchiveRecord":
        raw = json.loads(line)
        products = {n: DataProduct.from_archive(n, e) for n, e in raw["products"].items()}
        return cls(
            channel=raw["channel"],
            generation=raw["generation"],
            outcome=raw["outcome"],
            started_at=raw["started_at"],
            ended_at=raw["ended_at"],
            products=MappingProxyType(products),
        )


def read_archive(path: str | Path) -> list[ArchiveRecord]:
    with open(path, encoding="utf-8") as fh:
        return [ArchiveRecord.from_json(line) for line in fh if line.strip()]


class DataBlockView:
    """The ``t_curr`` block of one decision cycle.

    Holds the products visible at snapshot time plus whatever the cycle
    records. Only the cycle that took the snapshot should write to it.
    """

    def __init__(
        self,
        space: "SpaceHandle",
        generation: int,
        products: dict[str, DataProduct],
        started_at: float,
    ) -> None:
        self._space = space
        self.generation = generation
        self.started_at = started_at
        self._products = products
        self._cycle_writers: dict[str, str] = {}
        self._state = BlockState.SNAPSHOTTED
        self._lock = threading.Lock()

    @property
    def channel_id(self) -> str:
        return self._space.channel_id

    @property
    def state(self) -> BlockState:
        return self._state

    @property
    def products(self) -> Mapping[str, DataProduct]:
        return MappingProxyType(self._products)

    def __contains__(self, name: object) -> bool:
        return name in self._products

    def __getitem__(self, name: str) -> DataProduct:
        try:
            return self._products[name]
        except KeyError:
            raise UnknownProduct(name) from None

    def get(self, name: str, default: DataProduct | None = None) -> DataProduct | None:
        return self._products.get(name, default)

    def value(self, name: str) -> Any:
        return self[name].value

    def names(self) -> list[str]:
        return sorted(self._products)

    def record(self, product: DataProduct) -> DataProduct:
        """Add a cycle product (transform output, fact value, inference result)."""
        with self._lock:
            if self._state is not BlockState.SNAPSHOTTED:
                raise BlockLocked(
                    f"generation {self.generation} of {self.channel_id} is locked"
                )
            writer = self._cycle_writers.get(product.name)
            if writer is not None and writer != product.produced_by:
                raise DuplicateProducer(
                    f"{product.name!r} already written by {writer!r} this cycle"
                )
            if writer is None and product.name in self._products:
                raise DuplicateProducer(
                    f"{product.name!r} already present from "
                    f"{self._products[product.name].produced_by!r}"
                )
            stamped = replace(
                product,
                generation=self.generation,
                produced_at=(
                    product.produced_at
                    if product.produced_at is not None
                    else self._space.clock.now()
                ),
            )
            self._products[product.name] = stamped
            self._cycle_writers[product.name] = product.produced_by
            return stamped

    def lock_and_archive(self, outcome: str, ended_at: float | None = None) -> ArchiveRecord:
        if outcome not in OUTCOMES:
            raise ValueError(f"unknown cycle outcome {outcome!r}")
        with self._lock:
            if self._state is not BlockState.SNAPSHOTTED:
                raise AlreadyArchived(
                    f"generation {self.generation} of {self.channel_id} already archived"
                )
            self._state = BlockState.LOCKED_ARCHIVED
            ended = self._space.clock.now() if ended_at is None else ended_at
            record = ArchiveRecord(
                channel=self.channel_id,
                generation=self.generation,
                outcome=outcome,
                started_at=isoformat(self.started_at),
                ended_at=isoformat(ended),
                products=MappingProxyType(dict(sorted(self._products.items()))),
            )
        self._space._append_archive(record)
        return record


# names kept for parity with the operation list
def record_cycle_product(view: DataBlockView, product: DataProduct) -> DataProduct:
    return view.record(product)


def lock_and_archive(view: DataBlockView, outcome: str) -> ArchiveRecord:
    return view.lock_and_archive(outcome)


class SpaceHandle:
    """One channel's lineage of DataBlocks."""

    def __init__(self, channel_id: str, clock: Clock, archive_path: Path | None) -> None:
        self.channel_id = channel_id
        self.clock = clock
        self.archive_path = archive_path
        self._lock = threading.RLock()
        self._generation = 0
        self._open: dict[str, DataProduct] = {}
        self._journal: deque[PutRecord] = deque(maxlen=JOURNAL_LIMIT)
        self._archive: list[ArchiveRecord] = []
        self._pending: dict[int, DataBlockView] = {}
        self._closed = False
        if archive_path is not None:
            archive_path.parent.mkdir(parents=True, exist_ok=True)
            archive_path.write_text("", encoding="utf-8")

    # -- writes -------------------------------------------------------------

    def put(self, product: DataProduct) -> DataProduct:
        """Write ``product`` into the open block, replacing a same-named one."""
        with self._lock:
            if self._closed:
                raise SpaceClosed(self.channel_id)
            now = self.clock.now()
            stamped = replace(
                product,
                generation=self._generation,
                produced_at=product.produced_at if product.produced_at is not None else now,
            )
            replaced = stamped.name in self._open
            self._open[stamped.name] = stamped
            self._journal.append(
                PutRecord(
                    stamped.name,
                    stamped.produced_by,
                    self._generation,
                    stamped.produced_at,
                    replaced,
                    stamped.value,
                )
            )
            return stamped

    def put_value(self, name: str, value: Any, produced_by: str, **kw: Any) -> DataProduct:
        return self.put(DataProduct(name=name, value=value, produced_by=produced_by, **kw))

    def snapshot(self) -> tuple[int, DataBlockView]:
        """Freeze the open block as ``t_curr`` and open generation + 1."""
        with self._lock:
            if self._closed:
                raise SpaceClosed(self.channel_id)
            generation = self._generation
            # products are immutable, so a shallow copy is a full copy-on-write split
            view = DataBlockView(self, generation, dict(self._open), self.clock.now())
            self._pending[generation] = view
            self._generation += 1
            return generation, view

    def _append_archive(self, record: ArchiveRecord) -> None:
        with self._lock:
            expected = self._archive[-1].generation + 1 if self._archive else None
            if expected is not None and record.generation < expected:
                raise DataSpaceError(
                    f"archive for {self.channel_id} out of order: "
                    f"{record.generation} after {expected - 1}"
                )
            self._archive.append(record)
            self._pending.pop(record.generation, None)
            if self.archive_path is not None:
                with open(self.archive_path, "a", encoding="utf-8") as fh:
                    fh.write(record.to_json() + "\n")

    # -- reads --------------------------------------------------------------

    @property
    def generation(self) -> int:
        """Generation of the open (``t_next``) block."""
        with self._lock:
            return self._generation

    @property
    def closed(self) -> bool:
        return self._closed

    def open_products(self) -> Mapping[str, DataProduct]:
        with self._lock:
            return MappingProxyType(dict(self._open))

    def journal(self) -> list[PutRecord]:
        with self._lock:
            return list(self._journal)

    def archive(self) -> list[ArchiveRecord]:
        with self._lock:
            return list(self._archive)

    def block_states(self) -> dict[int, BlockState]:
        """State of every block this handle knows about, keyed by generation."""
        with self._lock:
            states = {r.generation: BlockState.LOCKED_ARCHIVED for r in self._archive}
            states.update({g: v.state for g, v in self._pending.items()})
            states[self._generation] = BlockState.OPEN
            return states

    def history(self, product_name: str) -> list[tuple[int, Any]]:
        with self._lock:
            return [
                (r.generation, r.products[product_name].value)
                for r in self._archive
                if product_name in r.products
            ]

    def latest(self, product_name: str) -> DataProduct:
        """Newest value of a product: the open block first, then the archive."""
        with self._lock:
            if product_name in self._open:
                return self._open[product_name]
            for record in reversed(self._archive):
                if product_name in record.products:
                    return record.products[product_name]
        raise UnknownProduct(f"{self.channel_id} has no product {product_name!r}")

    # -- lifecycle ----------------------------------------------------------

    def close(self) -> None:
        with self._lock:
            self._closed = True

    def reopen(self) -> None:
        with self._lock:
            self._closed = False


class DataSpace:
    """Registry of per-channel spaces sharing a clock and archive directory."""

    def __init__(self, archive_dir: str | Path | None = None, clock: Clock | None = None) -> None:
        self.archive_dir = Path(archive_dir) if archive_dir is not None else None
        self.clock = clock or WallClock()
        self._spaces: dict[str, SpaceHandle] = {}
        self._lock = threading.Lock()

    def create_space(self, channel_id: str) -> SpaceHandle:
        if not isinstance(channel_id, str) or not channel_id.strip():
            raise InvalidName("channel id must be a non-empty string")
        if "/" in channel_id or "\\" in channel_id:
            raise InvalidName(f"channel id {channel_id!r} may not contain path separators")
        with self._lock:
            if channel_id in self._spaces:
                raise DuplicateChannel(channel_id)
            path = self.archive_dir / f"{channel_id}.jsonl" if self.archive_dir else None
            handle = SpaceHandle(channel_id, self.clock, path)
            self._spaces[channel_id] = handle
            return handle

    def space(self, channel_id: str) -> SpaceHandle:
        try:
            return self._spaces[channel_id]
        except KeyError:
            raise UnknownChannel(channel_id) from None

    def __contains__(self, channel_id: object) -> bool:
        return channel_id in self._spaces

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._spaces))

    def history(self, channel_id: str, product_name: str) -> list[tuple[int, Any]]:
        return self.space(channel_id).history(product_name)

