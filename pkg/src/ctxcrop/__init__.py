"""ctxcrop: context-driven region-of-interest cropping for multi-turn
multimodal dialogues, plus the double-stimulus assessment toolkit used to
measure whether the cropping helped.

The refinement half reads a dialogue dataset, infers what each patient
photo should show from the conversation preceding it, asks a zero-shot
grounding backend for the matching regions, and conservatively crops the
image to their union — falling back to the untouched original whenever
any step comes up empty.  The assessment half scores treatment vs
reference responses on a five-grade scale and aggregates the differences
into session-, image-, and cropped-image-level DMOS with significance
tests.
"""

from .backends import (BackendError, FixtureGrounding, FixtureTextGen,
                       GroundingBackend, HttpGrounding, HttpTextGen,
                       ImageRef, RawDetection, TextGenBackend)
from .context import ContextWindow, UnknownImageError, extract_context
from .dialogue import (Box, ContentItem, Dataset, ImageItem, RecordError,
                       Session, Text, Turn, box_area, dump_dataset,
                       load_dataset, parse_dataset, serialize_dataset)
from .grounding import (Detection, GroundingConfig, filter_detections,
                        ground)
from .keywords import (KeywordList, LexiconExtractor, PromptText,
                       extract_keywords, parse_keywords, render_prompt)
from .pipeline import (Backends, PipelineConfig, ProvenanceRecord,
                       RatioHistogram, ratio_histogram, read_provenance,
                       refine_dataset, write_provenance)
from .refine import (DegenerateBoxError, RefinementResult, clamp_box,
                     crop_image, refine_image, union_boxes)
from .assessment import (DmosSummary, IncompleteRatingsError, MetricReport,
                         RatingRecord, RatingSet, averaged_dmos,
                         cropped_image_dmos, image_dmos, load_rubric,
                         metric_report, mos, parse_ratings, score_diff,
                         session_dmos, significance_test)

__version__ = "0.1.0"

__all__ = [
    "BackendError", "Backends", "Box", "ContentItem", "ContextWindow",
    "Dataset", "DegenerateBoxError", "Detection", "DmosSummary",
    "FixtureGrounding", "FixtureTextGen", "GroundingBackend",
    "GroundingConfig", "HttpGrounding", "HttpTextGen", "ImageItem",
    "ImageRef", "IncompleteRatingsError", "KeywordList", "LexiconExtractor",
    "MetricReport", "PipelineConfig", "PromptText", "ProvenanceRecord",
    "RatingRecord", "RatingSet", "RatioHistogram", "RawDetection",
    "RecordError", "RefinementResult", "Session", "Text", "TextGenBackend",
    "Turn", "UnknownImageError", "averaged_dmos", "box_area", "clamp_box",
    "cropped_image_dmos", "crop_image", "dump_dataset", "extract_context",
    "extract_keywords", "filter_detections", "ground", "image_dmos",
    "load_dataset", "load_rubric", "metric_report", "mos", "parse_dataset",
    "parse_keywords", "parse_ratings", "ratio_histogram", "read_provenance",
    "refine_dataset", "refine_image", "render_prompt", "score_diff",
    "serialize_dataset", "session_dmos", "significance_test", "union_boxes",
    "write_provenance",
]
