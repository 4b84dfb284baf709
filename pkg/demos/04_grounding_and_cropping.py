"""Grounding detections into a single conservative crop.

Detections below either confidence threshold are dropped (at exactly the
threshold they are kept). Whatever survives is unioned into one hull,
clamped to the frame, and cut out; any empty step keeps the original
image byte for byte.
"""

import io

from PIL import Image

from ctxcrop import KeywordList, filter_detections, ground, refine_image
from ctxcrop.backends import RawDetection
from ctxcrop.dialogue import Box, ImageItem
from ctxcrop.grounding import Detection, GroundingConfig


class CannedGrounding:
    """Stands in for a zero-shot grounding service."""

    def detect(self, image, phrases, box_threshold, text_threshold):
        return [
            RawDetection((40.2, 30.8, 210.0, 170.5), "ankle", 0.82, 0.61),
            RawDetection((180.0, 120.0, 300.0, 260.0), "swelling", 0.47, 0.35),
            RawDetection((5.0, 5.0, 60.0, 60.0), "shadow", 0.20, 0.90),
        ]


item = ImageItem(image_id="demo", uri="demo.png", width=320, height=280)
keywords = KeywordList(keywords=("ankle", "swelling"), source="backend")
cfg = GroundingConfig()  # box 0.35, text 0.25

detections = ground(item, keywords, cfg, CannedGrounding())
print("kept detections:")
for d in detections:
    print(f"  {d.phrase:10} box={d.box} scores=({d.box_score}, "
          f"{d.phrase_score})")
# the 0.20 "shadow" detection fell below the box threshold

# build a synthetic photo and apply the crop decision
canvas = Image.new("RGB", (320, 280), (70, 70, 90))
canvas.paste(Image.new("RGB", (160, 140), (220, 170, 150)), (60, 60))
buf = io.BytesIO()
canvas.save(buf, format="PNG")

result, cropped_bytes = refine_image(item, detections,
                                     image_bytes=buf.getvalue())
print(f"\ndecision: {result.status} ({result.reason}), "
      f"crop={result.crop_box}, keeps {result.area_ratio:.1%} of the area")
out = Image.open(io.BytesIO(cropped_bytes))
print("cropped size:", out.size)

# nothing detected -> nothing lost
result, out_bytes = refine_image(item, [], image_bytes=buf.getvalue())
print(f"\nno detections: {result.status}, ratio {result.area_ratio}, "
      f"bytes identical: {out_bytes == buf.getvalue()}")

# thresholds are literal: 0.34 drops, 0.35 keeps
edge = [Detection(box=Box(0, 0, 10, 10), phrase="x",
                  box_score=s, phrase_score=0.5) for s in (0.34, 0.35)]
print("at-threshold filtering:",
      [d.box_score for d in filter_detections(edge, cfg)])
