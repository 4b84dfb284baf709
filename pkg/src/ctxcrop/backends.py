"""Pluggable backend clients for keyword extraction and visual grounding.

Two wire contracts, both JSON over HTTP:

* text generation: ``POST {base}/v1/complete`` with ``{"prompt": str}``
  returning ``{"text": str}``;
* grounding: ``POST {base}/v1/ground`` with ``{"image": base64 str,
  "phrases": [str], "box_threshold": float, "text_threshold": float}``
  returning ``{"detections": [{"box": [x_min, y_min, x_max, y_max],
  "phrase": str, "box_score": float, "phrase_score": float}]}``.

Grounding backends built on open-set detectors conventionally join the
phrase list into a single period-separated query string; that join happens
behind the wire contract, so the client always sends the list.

Fixture implementations serve canned responses from local files so the
whole pipeline runs offline and deterministically.  All clients are
stateless per call and safe to share across threads.
"""

from __future__ import annotations

import base64
import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import httpx

log = logging.getLogger(__name__)


class BackendError(RuntimeError):
    """A backend call failed after exhausting its configured retries."""


@dataclass(frozen=True)
class ImageRef:
    """Reference to one image: id plus bytes or an on-disk location."""

    image_id: str
    path: Optional[Path] = None
    data: Optional[bytes] = None

    def read_bytes(self) -> bytes:
        if self.data is not None:
            return self.data
        if self.path is None:
            raise IOError(f"image {self.image_id!r} has no bytes and no path")
        return Path(self.path).read_bytes()


@dataclass(frozen=True)
class RawDetection:
    """One detection exactly as the backend reported it (float pixel box)."""

    box: tuple[float, float, float, float]
    phrase: str
    box_score: float
    phrase_score: float


class TextGenBackend(Protocol):
    def complete(self, prompt: str) -> str: ...


class GroundingBackend(Protocol):
    def detect(self, image: ImageRef, phrases: Sequence[str],
               box_threshold: float, text_threshold: float) -> list[RawDetection]: ...


def _with_retries(call, *, retries: int, backoff_s: float, what: str):
    """Run *call*, retrying transient failures with exponential backoff."""
    attempt = 0
    while True:
        try:
            return call()
        except (httpx.HTTPError, OSError, ValueError) as exc:
            if attempt >= retries:
                raise BackendError(
                    f"{what} failed after {attempt + 1} attempt(s): {exc}"
                ) from exc
            delay = backoff_s * (2 ** attempt)
            log.warning("%s failed (%s), retrying in %.2fs", what, exc, delay)
            if delay > 0:
                time.sleep(delay)
            attempt += 1


class HttpTextGen:
    """Text-generation client speaking the ``/v1/complete`` contract."""

    def __init__(self, base_url: str, *, timeout_ms: int = 30_000,
                 retries: int = 2, backoff_s: float = 0.25):
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff_s = backoff_s
        self._client = httpx.Client(timeout=timeout_ms / 1000.0)

    def complete(self, prompt: str) -> str:
        def call() -> str:
            resp = self._client.post(f"{self.base_url}/v1/complete",
                                     json={"prompt": prompt})
            resp.raise_for_status()
            payload = resp.json()
            if not isinstance(payload.get("text"), str):
                raise ValueError("reply missing `text` field")
            return payload["text"]

        return _with_retries(call, retries=self.retries,
                             backoff_s=self.backoff_s, what="text-gen call")


class HttpGrounding:
    """Grounding client speaking the ``/v1/ground`` contract.

    Thresholds travel with the request so the backend can pre-filter; the
    caller re-filters locally, which keeps fixture and live paths identical.
    """

    def __init__(self, base_url: str, *, timeout_ms: int = 60_000,
                 retries: int = 2, backoff_s: float = 0.25):
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff_s = backoff_s
        self._client = httpx.Client(timeout=timeout_ms / 1000.0)

    def detect(self, image: ImageRef, phrases: Sequence[str],
               box_threshold: float, text_threshold: float) -> list[RawDetection]:
        payload = {
            "image": base64.b64encode(image.read_bytes()).decode("ascii"),
            "phrases": list(phrases),
            "box_threshold": box_threshold,
            "text_threshold": text_threshold,
        }

        def call() -> list[RawDetection]:
            resp = self._client.post(f"{self.base_url}/v1/ground", json=payload)
            resp.raise_for_status()
            body = resp.json()
            return [
                RawDetection(
                    box=tuple(float(v) for v in det["box"]),
                    phrase=str(det.get("phrase", "")),
                    box_score=float(det["box_score"]),
                    phrase_score=float(det["phrase_score"]),
                )
                for det in body.get("detections", [])
            ]

        return _with_retries(call, retries=self.retries,
                             backoff_s=self.backoff_s, what="grounding call")


class FixtureTextGen:
    """Canned text-generation replies matched by prompt substring.

    Rules are checked in order; the first rule whose ``contains`` string
    occurs in the prompt wins.  Without a match the ``default`` reply is
    returned (empty string when unset, which parses to zero keywords).
    """

    def __init__(self, rules: Sequence[tuple[str, str]] = (),
                 default: str = ""):
        self.rules = list(rules)
        self.default = default
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "FixtureTextGen":
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [(r["contains"], r["reply"]) for r in spec.get("rules", [])]
        return cls(rules=rules, default=spec.get("default", ""))

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.calls += 1
        for needle, reply in self.rules:
            if needle in prompt:
                return reply
        return self.default


class FixtureGrounding:
    """Canned grounding responses read from a directory.

    One JSON file per image named ``<image_id>.json`` holding a list of
    entries ``{"phrases": [...] | null, "detections": [...]}``.  An entry
    matches when its phrase set equals the queried one case-insensitively;
    ``null`` phrases match any query.  No file or no matching entry means
    zero detections, which downstream treats as the keep-original fallback.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.calls = 0
        self._lock = threading.Lock()

    def detect(self, image: ImageRef, phrases: Sequence[str],
               box_threshold: float, text_threshold: float) -> list[RawDetection]:
        with self._lock:
            self.calls += 1
        path = self.directory / f"{image.image_id}.json"
        if not path.exists():
            log.debug("no grounding fixture for image %s", image.image_id)
            return []
        entries = json.loads(path.read_text(encoding="utf-8"))
        want = {p.lower() for p in phrases}
        for entry in entries:
            have = entry.get("phrases")
            if have is not None and {p.lower() for p in have} != want:
                continue
            return [
                RawDetection(
                    box=tuple(float(v) for v in det["box"]),
                    phrase=str(det.get("phrase", "")),
                    box_score=float(det["box_score"]),
                    phrase_score=float(det["phrase_score"]),
                )
                for det in entry.get("detections", [])
            ]
        log.debug("no grounding fixture entry for image %s with phrases %s",
                  image.image_id, sorted(want))
        return []
