"""JSON-over-HTTP client used by every external backend."""

from __future__ import annotations

import json
import socket
import urllib.error
import urllib.request

from .errors import BackendError, BackendTimeout


def post_json(url: str, payload: dict, timeout: float) -> dict:
    """POST ``payload`` as JSON and return the decoded JSON reply.

    Raises BackendTimeout when no reply arrives within ``timeout`` seconds or
    the endpoint cannot be reached, BackendError on a non-2xx status or a
    reply that is not a JSON object.
    """
    body = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(url, data=body, method="POST",
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            raw = resp.read()
    except urllib.error.HTTPError as exc:
        raise BackendError(f"{url} replied {exc.code}", status=exc.code) from None
    except urllib.error.URLError as exc:
        raise BackendTimeout(f"{url} unreachable: {exc.reason}") from None
    except (socket.timeout, TimeoutError):
        raise BackendTimeout(f"{url} did not reply within {timeout} s") from None
    except OSError as exc:
        raise BackendTimeout(f"{url} unreachable: {exc}") from None
    try:
        reply = json.loads(raw)
    except ValueError:
        raise BackendError(f"{url} replied with invalid JSON") from None
    if not isinstance(reply, dict):
        raise BackendError(f"{url} reply is not a JSON object")
    return reply
