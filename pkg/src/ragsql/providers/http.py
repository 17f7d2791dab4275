"""Small HTTP helper shared by the remote providers."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Any

import httpx

from ..errors import ProviderUnavailable

log = logging.getLogger(__name__)

RETRIES = 2
BACKOFF_S = 0.5


@dataclass(frozen=True)
class Endpoint:
    url: str
    model: str
    api_key_env: str | None = None
    timeout_s: float = 60.0

    @classmethod
    def from_config(cls, cfg: dict[str, Any]) -> "Endpoint":
        try:
            return cls(
                url=cfg["url"],
                model=cfg["model"],
                api_key_env=cfg.get("api_key_env"),
                timeout_s=float(cfg.get("timeout_s", 60.0)),
            )
        except KeyError as exc:
            raise ValueError(f"remote provider config missing {exc.args[0]!r}") from None

    def headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers


def post_json(
    endpoint: Endpoint,
    payload: dict[str, Any],
    *,
    client: httpx.Client | None = None,
    sleep=time.sleep,
) -> dict[str, Any]:
    """POST with the shared retry policy (transport errors and 5xx only)."""
    attempts = 0
    last: Exception | None = None
    owns = client is None
    client = client or httpx.Client(timeout=endpoint.timeout_s)
    try:
        while attempts <= RETRIES:
            attempts += 1
            try:
                resp = client.post(endpoint.url, json=payload, headers=endpoint.headers())
                if resp.status_code >= 500:
                    raise httpx.HTTPStatusError(
                        f"server error {resp.status_code}", request=resp.request, response=resp
                    )
                resp.raise_for_status()
                return resp.json()
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last = exc
                status = getattr(getattr(exc, "response", None), "status_code", None)
                if status is not None and status < 500:
                    break
                if attempts <= RETRIES:
                    log.warning("request to %s failed (%s), retrying", endpoint.url, exc)
                    sleep(BACKOFF_S * 2 ** (attempts - 1))
    finally:
        if owns:
            client.close()
    raise ProviderUnavailable(f"{endpoint.url}: {last}", attempts=attempts)
