from __future__ import annotations

import logging
import os
import time

import httpx

from .errors import ConfigError

log = logging.getLogger(__name__)

TRANSIENT_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class PermanentHTTPError(Exception):
    pass


class TransientHTTPError(Exception):
    pass


def auth_headers(api_key_env: str | None) -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    if api_key_env:
        key = os.environ.get(api_key_env)
        if not key:
            raise ConfigError(f"environment variable {api_key_env} is not set")
        headers["Authorization"] = f"Bearer {key}"
    return headers


def post_json(
    client: httpx.Client,
    url: str,
    payload: dict,
    *,
    headers: dict[str, str],
    timeout: float,
    retries: int,
    backoff: float = 0.5,
) -> dict:
    """POST *payload* and return the decoded JSON body, retrying transient failures.

    Raises TransientHTTPError once the retry budget is spent and PermanentHTTPError
    straight away for non-retryable statuses or undecodable bodies.
    """
    attempt = 0
    while True:
        try:
            resp = client.post(url, json=payload, headers=headers, timeout=timeout)
            if resp.status_code in TRANSIENT_STATUS:
                raise TransientHTTPError(f"HTTP {resp.status_code} from {url}")
            if resp.status_code >= 400:
                raise PermanentHTTPError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise PermanentHTTPError(f"invalid JSON from {url}") from exc
        except (httpx.TransportError, TransientHTTPError) as exc:
            if attempt >= retries:
                raise TransientHTTPError(f"{exc} (after {attempt + 1} attempts)") from exc
            delay = backoff * (2**attempt)
            log.warning("transient failure on %s (%s); retry %d in %.2fs", url, exc, attempt + 1, delay)
            if delay:
                time.sleep(delay)
            attempt += 1
