"""Zero-shot grounding queries and confidence-threshold filtering.

The backend does the heavy lifting; this module owns the contract around
it: send the query once per image, apply the box/text confidence
thresholds locally (so fixture and live backends behave identically),
snap float boxes to integer pixel boxes, and clamp them to the frame.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

from .backends import BackendError, GroundingBackend, ImageRef, RawDetection
from .dialogue import Box, ImageItem
from .keywords import KeywordList

log = logging.getLogger(__name__)

DEFAULT_BOX_THRESHOLD = 0.35
DEFAULT_TEXT_THRESHOLD = 0.25


@dataclass(frozen=True)
class GroundingConfig:
    """Confidence cutoffs; detections at exactly a threshold are kept."""

    box_threshold: float = DEFAULT_BOX_THRESHOLD
    text_threshold: float = DEFAULT_TEXT_THRESHOLD

    def __post_init__(self):
        for name in ("box_threshold", "text_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


@dataclass(frozen=True)
class Detection:
    """One kept detection: integer pixel box plus backend confidences."""

    box: Box
    phrase: str
    box_score: float
    phrase_score: float


def filter_detections(raw: list[Detection],
                      cfg: GroundingConfig) -> list[Detection]:
    """Keep detections meeting both thresholds (inclusive), order preserved."""
    return [
        det for det in raw
        if det.box_score >= cfg.box_threshold
        and det.phrase_score >= cfg.text_threshold
    ]


def _snap_box(raw: tuple[float, float, float, float], width: int,
              height: int) -> Box | None:
    """Round a float box outward to pixels and clamp it to the frame.

    Returns None when the clamped box is degenerate (entirely outside the
    frame or zero-extent), which drops the detection.
    """
    x_min = max(0, math.floor(raw[0]))
    y_min = max(0, math.floor(raw[1]))
    x_max = min(width, math.ceil(raw[2]))
    y_max = min(height, math.ceil(raw[3]))
    if x_min >= x_max or y_min >= y_max:
        return None
    return Box(x_min, y_min, x_max, y_max)


def ground(image: ImageItem, keywords: KeywordList, cfg: GroundingConfig,
           backend: GroundingBackend, *, image_path=None,
           image_bytes: bytes | None = None,
           error_mode: Literal["empty", "raise"] = "empty") -> list[Detection]:
    """Query *backend* once for *image* and return filtered detections.

    Keywords must be non-empty; callers skip grounding entirely when there
    is nothing to ask for.  Backend failure (after the client's retries)
    yields an empty list with a warning under the default ``error_mode``,
    or re-raises :class:`BackendError` under ``"raise"`` so callers can
    tell a dead backend apart from a genuine zero-detection answer.
    """
    if not keywords:
        raise ValueError("ground() requires a non-empty keyword list")
    ref = ImageRef(image_id=image.image_id, path=image_path, data=image_bytes)
    try:
        raw = backend.detect(ref, list(keywords.keywords),
                             cfg.box_threshold, cfg.text_threshold)
    except BackendError as exc:
        if error_mode == "raise":
            raise
        log.warning("grounding backend failed for image %s: %s",
                    image.image_id, exc)
        return []
    detections: list[Detection] = []
    for det in raw:
        box = _snap_box(det.box, image.width, image.height)
        if box is None:
            log.debug("dropping out-of-frame detection %s on image %s",
                      det.box, image.image_id)
            continue
        detections.append(Detection(box=box, phrase=det.phrase,
                                    box_score=det.box_score,
                                    phrase_score=det.phrase_score))
    return filter_detections(detections, cfg)


def raw_to_detection(det: RawDetection, width: int,
                     height: int) -> Detection | None:
    """Snap one raw detection to a frame; None when it falls outside."""
    box = _snap_box(det.box, width, height)
    if box is None:
        return None
    return Detection(box=box, phrase=det.phrase, box_score=det.box_score,
                     phrase_score=det.phrase_score)
