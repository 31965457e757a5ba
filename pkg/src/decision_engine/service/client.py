from __future__ import annotations

from pathlib import Path
from typing import Any

import httpx


class ControlError(Exception):
    def __init__(self, status: int, detail: str) -> None:
        super().__init__(detail)
        self.status = status
        self.detail = detail


class ControlClient:
    """Talks to a running engine's control socket."""

    def __init__(self, socket_path: str | Path, timeout: float = 60.0) -> None:
        self.socket_path = Path(socket_path)
        transport = httpx.HTTPTransport(uds=str(self.socket_path))
        self._http = httpx.Client(transport=transport, base_url="http://engine", timeout=timeout)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ControlClient":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def _call(self, method: str, path: str, **kw: Any) -> dict[str, Any]:
        r = self._http.request(method, path, **kw)
        if r.status_code >= 400:
            try:
                detail = r.json().get("detail", r.text)
            except ValueError:
                detail = r.text
            raise ControlError(r.status_code, str(detail))
        return r.json()

    def status(self, channel_id: str | None = None) -> dict[str, Any]:
        if channel_id is None:
            return self._call("GET", "/status")
        return self._call("GET", f"/channels/{channel_id}")

    def up(self, channel_id: str) -> dict[str, Any]:
        return self._call("POST", f"/channels/{channel_id}/up")

    def down(self, channel_id: str, grace: float | None = None) -> dict[str, Any]:
        params = {"grace": grace} if grace is not None else None
        return self._call("POST", f"/channels/{channel_id}/down", params=params)
