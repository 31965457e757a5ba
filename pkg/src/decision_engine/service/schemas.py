from __future__ import annotations

from typing import Optional

from pydantic import BaseModel


class CycleOutcomeModel(BaseModel):
    generation: int
    outcome: str
    fired_rules: list[str]
    publishers_run: list[str]
    duration: float
    error: Optional[str] = None


class ChannelStatus(BaseModel):
    channel: str
    state: str
    cycles: int
    generation: int
    last_outcome: Optional[CycleOutcomeModel] = None
    unsatisfied_sources: list[str]


class EngineStatus(BaseModel):
    channels: dict[str, ChannelStatus]


class LifecycleResult(BaseModel):
    channel: str
    state: str


class Problem(BaseModel):
    detail: str
