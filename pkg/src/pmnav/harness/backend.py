"""HTTP adapter for an external planning/direction model.

Wire format (JSON over POST, UTF-8):

    request  {"kind": "plan" | "coarse-direction", "prompt": str, "document": str}
    response {"reply": str}

For ``plan`` the document is the annotated map SVG; for ``coarse-direction``
it is a JSON panorama descriptor.  Latency is measured on the client.
"""

from __future__ import annotations

import json
import re
import socket
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Sequence

from ..perception import quantize_direction
from ..planner import NavPlan, PlanParseError, parse_plan_response
from ..priori_map import SemanticPrioriMap

KINDS = ("plan", "coarse-direction")
_DIRECTION = re.compile(r"^\s*direction\s*:\s*(-?\d+(?:\.\d+)?)\s*$", re.IGNORECASE | re.MULTILINE)


class BackendError(RuntimeError):
    pass


class BackendTimeout(BackendError):
    pass


class TransportError(BackendError):
    pass


class MalformedReply(BackendError):
    def __init__(self, message: str, diagnostic: str = ""):
        self.diagnostic = diagnostic
        super().__init__(f"{message}: {diagnostic}" if diagnostic else message)


@dataclass(frozen=True)
class BackendRequest:
    kind: str
    prompt: str
    document: str

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.prompt or not self.document:
            raise ValueError(f"{self.kind} request needs both prompt and document")

    def to_wire(self) -> bytes:
        return json.dumps({"kind": self.kind, "prompt": self.prompt, "document": self.document}).encode("utf-8")


@dataclass(frozen=True)
class BackendResponse:
    reply: str
    latency_ms: float
    parsed: Any = None


def parse_direction_reply(text: str) -> float:
    """Read ``direction: <degrees>`` and snap it to the 30-degree grid."""
    found = _DIRECTION.findall(text)
    if len(found) != 1:
        raise MalformedReply("coarse-direction reply", "expected exactly one 'direction: <degrees>' line")
    value = float(found[0])
    if not -180.0 <= value <= 180.0:
        raise MalformedReply("coarse-direction reply", f"direction {value} outside [-180, 180]")
    return quantize_direction(value)


def call_backend(
    request: BackendRequest,
    endpoint: str,
    timeout: float = 30.0,
    m: SemanticPrioriMap | None = None,
) -> BackendResponse:
    """POST a request and parse the reply according to its kind."""
    http = urllib.request.Request(endpoint, data=request.to_wire(), method="POST", headers={"Content-Type": "application/json"})
    t0 = time.perf_counter()
    try:
        with urllib.request.urlopen(http, timeout=timeout) as resp:
            body = resp.read()
    except (socket.timeout, TimeoutError) as exc:
        raise BackendTimeout(f"no reply from {endpoint} within {timeout} s") from exc
    except urllib.error.HTTPError as exc:
        raise TransportError(f"{endpoint} answered HTTP {exc.code}") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, (socket.timeout, TimeoutError)):
            raise BackendTimeout(f"no reply from {endpoint} within {timeout} s") from exc
        raise TransportError(f"cannot reach {endpoint}: {exc.reason}") from exc
    except OSError as exc:
        raise TransportError(f"cannot reach {endpoint}: {exc}") from exc
    latency = (time.perf_counter() - t0) * 1000.0
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedReply("response body is not JSON", str(exc)) from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("reply"), str):
        raise MalformedReply("response body", "missing string field 'reply'")
    reply = payload["reply"]
    if request.kind == "plan":
        try:
            parsed: Any = parse_plan_response(reply, m)
        except PlanParseError as exc:
            raise MalformedReply("plan reply", str(exc)) from exc
    else:
        parsed = parse_direction_reply(reply)
    return BackendResponse(reply, latency, parsed)


def call_many(
    requests: Sequence[BackendRequest],
    endpoint: str,
    timeout: float = 30.0,
    max_workers: int = 4,
    m: SemanticPrioriMap | None = None,
) -> list[BackendResponse]:
    """Bounded-concurrency fan-out; results keep request order, first error propagates."""
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda r: call_backend(r, endpoint, timeout, m), requests))


def request_plan(m: SemanticPrioriMap, prompt: str, svg: str, endpoint: str, timeout: float = 30.0) -> NavPlan:
    return call_backend(BackendRequest("plan", prompt, svg), endpoint, timeout, m).parsed
