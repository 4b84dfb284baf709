"""Crop decision and execution: union of detection boxes, clamped to the
frame, with the conservative keep-original fallback.

Every failure along the per-image path (no context, no keywords, nothing
detected, backend down, union collapsing under the clamp) degrades to an
unchanged image with the reason recorded; a refinement run never loses an
image.  Unchanged means byte-identical: the fallback hands back the
original bytes without decoding, so nothing is silently re-encoded.
No margin is added around the union, since padding would shift the area
ratios that downstream metrics bucket on.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

from PIL import Image, UnidentifiedImageError

from .dialogue import Box, ImageItem, box_area
from .grounding import Detection

log = logging.getLogger(__name__)

RefineReason = Literal["ok", "no_context", "no_keywords", "no_detections",
                       "backend_error", "degenerate_union"]


class DegenerateBoxError(ValueError):
    """A box collapsed to zero extent after clamping."""


class ImageDecodeError(IOError):
    """The image bytes could not be decoded; aborts this image only."""


@dataclass(frozen=True)
class RefinementResult:
    """The crop decision for one image.

    ``area_ratio`` is cropped area over original area, in (0, 1]; an
    unchanged image has ratio 1 and no crop box.
    """

    image_id: str
    status: Literal["cropped", "unchanged"]
    area_ratio: float
    reason: RefineReason
    crop_box: Optional[Box] = None

    def __post_init__(self):
        if self.status == "unchanged" and (self.crop_box is not None
                                           or self.area_ratio != 1.0):
            raise ValueError("unchanged result must have ratio 1 and no box")
        if self.status == "cropped" and self.crop_box is None:
            raise ValueError("cropped result must carry its crop box")
        if not 0.0 < self.area_ratio <= 1.0:
            raise ValueError(f"area_ratio must be in (0, 1], "
                             f"got {self.area_ratio}")


def union_boxes(boxes: Sequence[Box]) -> Box:
    """Smallest box containing every input box (their bounding hull)."""
    if not boxes:
        raise ValueError("union_boxes requires at least one box")
    return Box(
        x_min=min(b.x_min for b in boxes),
        y_min=min(b.y_min for b in boxes),
        x_max=max(b.x_max for b in boxes),
        y_max=max(b.y_max for b in boxes),
    )


def clamp_box(b: Box, width: int, height: int) -> Box:
    """Intersect *b* with the frame ``[0, width) x [0, height)``.

    Raises :class:`DegenerateBoxError` when the intersection is empty.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"frame must be positive, got {width}x{height}")
    x_min = max(b.x_min, 0)
    y_min = max(b.y_min, 0)
    x_max = min(b.x_max, width)
    y_max = min(b.y_max, height)
    if x_min >= x_max or y_min >= y_max:
        raise DegenerateBoxError(
            f"box {b} does not intersect frame {width}x{height}")
    return Box(x_min, y_min, x_max, y_max)


def crop_image(image_bytes: bytes, b: Box) -> bytes:
    """Cut region *b* out of *image_bytes*, re-encoded in the source format.

    The box must already be clamped to the image frame.
    """
    try:
        img = Image.open(io.BytesIO(image_bytes))
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageDecodeError(f"cannot decode image: {exc}") from exc
    fmt = img.format or "PNG"
    if b.x_max > img.width or b.y_max > img.height:
        raise ValueError(f"box {b} exceeds image frame "
                         f"{img.width}x{img.height}")
    region = img.crop((b.x_min, b.y_min, b.x_max, b.y_max))
    out = io.BytesIO()
    region.save(out, format=fmt)
    return out.getvalue()


def refine_image(image: ImageItem, detections: Sequence[Detection],
                 upstream_reason: RefineReason = "ok",
                 image_bytes: Optional[bytes] = None,
                 ) -> tuple[RefinementResult, Optional[bytes]]:
    """Decide and execute the crop for one image.

    *detections* must already be threshold-filtered.  With no detections
    the upstream reason (why the path came up empty) is recorded and the
    original bytes pass through untouched.  Otherwise the union of the
    detection boxes, clamped to the frame, becomes the crop; a union that
    collapses under the clamp degrades to unchanged as well.

    Returns the result paired with the output bytes: the input object
    itself when unchanged (byte-identical, possibly None when the caller
    never loaded them), or the cropped encoding.
    """
    def unchanged(reason: RefineReason):
        return (RefinementResult(image_id=image.image_id, status="unchanged",
                                 area_ratio=1.0, reason=reason), image_bytes)

    if not detections:
        reason = upstream_reason if upstream_reason != "ok" else "no_detections"
        return unchanged(reason)

    hull = union_boxes([det.box for det in detections])
    try:
        crop = clamp_box(hull, image.width, image.height)
    except DegenerateBoxError:
        log.warning("union %s degenerate on image %s (%dx%d), keeping "
                    "original", hull, image.image_id, image.width,
                    image.height)
        return unchanged("degenerate_union")

    if image_bytes is None:
        out_bytes = None
    else:
        out_bytes = crop_image(image_bytes, crop)
    ratio = box_area(crop) / (image.width * image.height)
    result = RefinementResult(image_id=image.image_id, status="cropped",
                              area_ratio=ratio, reason="ok", crop_box=crop)
    return result, out_bytes
