"""Minimal multimodal-model client: images + prompt in, text out.

The transport is a single-call interface so tests can swap in a
file-replay mock and no test depends on a live endpoint. The HTTP
transport posts JSON with base64 PPM images and reads either a
{"reply": ...} body or an OpenAI-style choices list.
"""

from __future__ import annotations

import base64
import io
import json
import os
import threading
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SceneliftError


@dataclass(frozen=True, slots=True)
class MllmClientConfig:
    endpoint: str = ""
    model: str = ""
    auth_env: str = "MLLM_API_KEY"  # name of the env var holding the token
    timeout: float = 60.0
    max_retries: int = 2
    concurrency: int = 1

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")


def _encode_ppm(img: np.ndarray) -> str:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    buf = io.BytesIO()
    buf.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
    buf.write(img.tobytes())
    return base64.b64encode(buf.getvalue()).decode("ascii")


class HttpTransport:
    """POSTs one JSON request per call to a chat-style endpoint."""

    def __init__(self, config: MllmClientConfig) -> None:
        if not config.endpoint:
            raise ValueError("HttpTransport needs a non-empty endpoint")
        self.config = config

    def send(self, images: list, prompt: str) -> str:
        payload = {
            "model": self.config.model,
            "prompt": prompt,
            "images": [{"format": "ppm", "data_base64": _encode_ppm(im)} for im in images],
        }
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        request = urllib.request.Request(
            self.config.endpoint,
            data=json.dumps(payload).encode("utf-8"),
            headers=headers,
            method="POST",
        )
        with urllib.request.urlopen(request, timeout=self.config.timeout) as response:
            body = json.loads(response.read().decode("utf-8"))
        if "reply" in body:
            return str(body["reply"])
        choices = body.get("choices")
        if choices:
            return str(choices[0]["message"]["content"])
        raise SceneliftError("endpoint response has neither 'reply' nor 'choices'")


class ReplayTransport:
    """Returns canned replies in order; the test double for send().

    The source is a JSON array of strings (or an already-loaded list).
    Thread-safe so a concurrency cap > 1 still hands out each reply
    exactly once, though reply-to-request pairing is only deterministic
    sequentially.
    """

    def __init__(self, replies) -> None:
        if isinstance(replies, (str, Path)):
            replies = json.loads(Path(replies).read_text(encoding="utf-8"))
        if not isinstance(replies, list) or not all(isinstance(r, str) for r in replies):
            raise SceneliftError("replay source must be a JSON array of strings")
        self._replies = list(replies)
        self._next = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._next

    def send(self, images: list, prompt: str) -> str:
        del images, prompt
        with self._lock:
            if self._next >= len(self._replies):
                raise SceneliftError("replay transport exhausted")
            reply = self._replies[self._next]
            self._next += 1
            return reply


class MllmClient:
    """Retry wrapper over a transport."""

    def __init__(self, transport, config: MllmClientConfig | None = None) -> None:
        self.transport = transport
        self.config = config or getattr(transport, "config", None) or MllmClientConfig()

    def send(self, images: list, prompt: str) -> str:
        last_error: Exception | None = None
        for _ in range(self.config.max_retries + 1):
            try:
                return self.transport.send(images, prompt)
            except Exception as exc:  # noqa: BLE001 - transport errors are opaque
                last_error = exc
        raise SceneliftError(f"transport failed after {self.config.max_retries + 1} attempts") from last_error
