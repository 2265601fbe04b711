"""LLM provider contract: text in, text out, optional image reference.

Two implementations ship here. DirectoryProvider replays canned responses
from a directory of fixture files keyed by prompt hash (sequence suffixes
support retry scripts); HttpProvider POSTs to a generic JSON endpoint and
is configured purely through the environment so no credential ever lands
in a manifest or shell history.

Wire contract: POST {"prompt": text, "image_ref": optional text} ->
response {"text": text}.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol

PROVIDER_URL_ENV = "PROVIDER_URL"
PROVIDER_TOKEN_ENV = "PROVIDER_TOKEN"


class ProviderCallError(RuntimeError):
    """Transport-level provider failure (network, missing fixture, bad payload)."""


@dataclass(frozen=True)
class ProviderRequest:
    prompt: str
    image_ref: Optional[str] = None


@dataclass(frozen=True)
class ProviderResponse:
    text: str
    status: str = "ok"


class LlmProvider(Protocol):
    def complete(self, request: ProviderRequest) -> ProviderResponse: ...


def prompt_digest(prompt: str) -> str:
    """Stable fixture key for a prompt: first 16 hex chars of its sha256."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


class DirectoryProvider:
    """Replays fixture files from ``root``.

    Lookup order for a prompt with digest D, where n counts prior calls
    with the same digest: ``D.<n>.txt`` (scripted sequence, e.g. failures
    then success), then ``D.txt``, then ``default.txt``. Raises
    ProviderCallError when nothing matches. Call counting is thread-safe
    so the refinement pipeline can keep several requests in flight.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise ProviderCallError(f"fixture directory not found: {self.root}")
        self._calls: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, request: ProviderRequest) -> ProviderResponse:
        digest = prompt_digest(request.prompt)
        with self._lock:
            n = self._calls.get(digest, 0)
            self._calls[digest] = n + 1
        for candidate in (f"{digest}.{n}.txt", f"{digest}.txt", "default.txt"):
            path = self.root / candidate
            if path.is_file():
                return ProviderResponse(text=path.read_text(encoding="utf-8"))
        raise ProviderCallError(f"no fixture for prompt digest {digest} (call #{n})")


class ScriptedProvider:
    """In-memory provider returning queued responses per prompt digest.

    ``script`` maps a prompt (or its digest) to a list of responses consumed
    one per call; a plain string behaves like a one-element list that keeps
    repeating. Useful for unit tests that do not want files on disk.
    """

    def __init__(self, script: dict[str, str | list[str]], default: Optional[str] = None):
        self._script: dict[str, list[str]] = {}
        self._repeat_last: dict[str, bool] = {}
        for key, value in script.items():
            digest = key if len(key) == 16 and _is_hex(key) else prompt_digest(key)
            if isinstance(value, str):
                self._script[digest] = [value]
                self._repeat_last[digest] = True
            else:
                self._script[digest] = list(value)
                self._repeat_last[digest] = False
        self._default = default
        self._calls: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, request: ProviderRequest) -> ProviderResponse:
        digest = prompt_digest(request.prompt)
        with self._lock:
            n = self._calls.get(digest, 0)
            self._calls[digest] = n + 1
        queue = self._script.get(digest)
        if queue is not None:
            if n < len(queue):
                return ProviderResponse(text=queue[n])
            if self._repeat_last.get(digest):
                return ProviderResponse(text=queue[-1])
        if self._default is not None:
            return ProviderResponse(text=self._default)
        raise ProviderCallError(f"no scripted response for digest {digest} (call #{n})")


def _is_hex(s: str) -> bool:
    try:
        int(s, 16)
        return True
    except ValueError:
        return False


class HttpProvider:
    """POSTs the wire-contract JSON to the endpoint named in PROVIDER_URL.

    An optional bearer token comes from PROVIDER_TOKEN. Credentials are
    env-only by design.
    """

    def __init__(self, url: Optional[str] = None, timeout: float = 60.0):
        self.url = url or os.environ.get(PROVIDER_URL_ENV)
        if not self.url:
            raise ProviderCallError(f"{PROVIDER_URL_ENV} is not set")
        self.timeout = timeout

    def complete(self, request: ProviderRequest) -> ProviderResponse:
        payload: dict[str, str] = {"prompt": request.prompt}
        if request.image_ref is not None:
            payload["image_ref"] = request.image_ref
        body = json.dumps(payload).encode("utf-8")
        req = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}, method="POST"
        )
        token = os.environ.get(PROVIDER_TOKEN_ENV)
        if token:
            req.add_header("Authorization", f"Bearer {token}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                data = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
            raise ProviderCallError(f"provider call failed: {exc}") from exc
        if "text" not in data:
            raise ProviderCallError("provider response missing 'text' field")
        return ProviderResponse(text=str(data["text"]))
