"""FastAPI control surface for a running engine.

Endpoints::

    GET  /status                  every channel's status
    GET  /channels/{id}           one channel's status
    POST /channels/{id}/up        start (boot) a stopped channel
    POST /channels/{id}/down      drain the in-flight cycle and stop
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException

from ..errors import InvalidTransition, UnknownChannel
from ..framework import Engine
from .schemas import ChannelStatus, EngineStatus, LifecycleResult


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="decision engine control")

    def channel_or_404(channel_id: str):
        try:
            return engine.channel(channel_id)
        except UnknownChannel:
            raise HTTPException(status_code=404, detail=f"unknown channel {channel_id!r}") from None

    @app.get("/status", response_model=EngineStatus)
    def status() -> EngineStatus:
        return EngineStatus(channels={cid: ChannelStatus(**s) for cid, s in engine.status().items()})

    @app.get("/channels/{channel_id}", response_model=ChannelStatus)
    def channel_status(channel_id: str) -> ChannelStatus:
        return ChannelStatus(**channel_or_404(channel_id).status())

    @app.post("/channels/{channel_id}/up", response_model=LifecycleResult)
    def up(channel_id: str) -> LifecycleResult:
        channel_or_404(channel_id)
        try:
            state = engine.start(channel_id)[channel_id]
        except InvalidTransition as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        return LifecycleResult(channel=channel_id, state=state.value)

    @app.post("/channels/{channel_id}/down", response_model=LifecycleResult)
    def down(channel_id: str, grace: Optional[float] = None) -> LifecycleResult:
        channel_or_404(channel_id)
        try:
            state = engine.stop(channel_id, grace)[channel_id]
        except InvalidTransition as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        return LifecycleResult(channel=channel_id, state=state.value)

    return app
