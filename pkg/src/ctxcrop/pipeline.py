"""Whole-dataset refinement: orchestration, provenance, area statistics.

For every image in a dataset the pipeline runs context selection, keyword
extraction, grounding, and the crop decision, then rewrites the image's
record to point at the refined file while leaving the conversation
structure untouched.  One provenance record per image captures what
happened; a re-run with the same configuration skips images whose
provenance is already on disk.

Refined images are written beside the originals as
``<image_id>.refined.<ext>``; original files are never touched, and
unchanged images keep their original URI so the no-op path stays
byte-exact.  Per-image infrastructure failures (unreadable file, dead
backend) degrade that image to unchanged with the reason recorded; only
dataset-level I/O aborts a run.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path, PurePosixPath
from typing import Iterable, Literal, Optional, Sequence, TextIO, Union

from .backends import (BackendError, FixtureGrounding, FixtureTextGen,
                       GroundingBackend, HttpGrounding, HttpTextGen,
                       TextGenBackend)
from .context import extract_context
from .dialogue import Box, Dataset, ImageItem, Session, Turn
from .grounding import Detection, GroundingConfig, ground
from .keywords import (DEFAULT_MAX_KEYWORDS, KeywordList, LexiconExtractor,
                       PROMPT_TEMPLATE_VERSION, extract_keywords)
from .refine import ImageDecodeError, RefinementResult, RefineReason, refine_image

log = logging.getLogger(__name__)

HISTOGRAM_EDGES = (0.2, 0.4, 0.6, 0.8, 1.0)

Population = Literal["all_images", "cropped_only"]


@dataclass(frozen=True)
class PipelineConfig:
    """Run configuration; the hash of the refinement-relevant fields keys
    resumability."""

    max_keywords: int = DEFAULT_MAX_KEYWORDS
    context_turns: int = 3
    box_threshold: float = 0.35
    text_threshold: float = 0.25
    crop_cutoff: float = 0.7
    max_in_flight: int = 4
    target_language: str = "English"
    kw_endpoint: Optional[str] = None
    ground_endpoint: Optional[str] = None
    fixtures_dir: Optional[str] = None
    kw_timeout_ms: int = 30_000
    kw_retries: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("box_threshold", "text_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if not 0.0 < self.crop_cutoff <= 1.0:
            raise ValueError(
                f"crop_cutoff must be in (0, 1], got {self.crop_cutoff}")
        if self.context_turns < 0:
            raise ValueError("context_turns must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @property
    def grounding(self) -> GroundingConfig:
        return GroundingConfig(box_threshold=self.box_threshold,
                               text_threshold=self.text_threshold)

    def config_hash(self) -> str:
        """Digest of every knob that changes per-image results."""
        payload = json.dumps({
            "max_keywords": self.max_keywords,
            "context_turns": self.context_turns,
            "box_threshold": self.box_threshold,
            "text_threshold": self.text_threshold,
            "target_language": self.target_language,
            "template_version": PROMPT_TEMPLATE_VERSION,
        }, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class Backends:
    """The two pluggable model clients a refinement run talks to."""

    textgen: TextGenBackend
    grounding: GroundingBackend
    fallback: Optional[LexiconExtractor] = None

    @classmethod
    def from_config(cls, cfg: PipelineConfig,
                    fallback: Optional[LexiconExtractor] = None) -> "Backends":
        if cfg.fixtures_dir:
            root = Path(cfg.fixtures_dir)
            kw_file = root / "keywords.json"
            textgen = (FixtureTextGen.from_file(kw_file) if kw_file.exists()
                       else FixtureTextGen())
            return cls(textgen=textgen,
                       grounding=FixtureGrounding(root / "grounding"),
                       fallback=fallback)
        if not cfg.kw_endpoint or not cfg.ground_endpoint:
            raise ValueError("need both backend endpoints or a fixtures dir")
        return cls(
            textgen=HttpTextGen(cfg.kw_endpoint, timeout_ms=cfg.kw_timeout_ms,
                                retries=cfg.kw_retries),
            grounding=HttpGrounding(cfg.ground_endpoint,
                                    retries=cfg.kw_retries),
            fallback=fallback,
        )


@dataclass
class ProvenanceRecord:
    """Audit entry for one image in one run."""

    session_id: str
    image_id: str
    context_turns_used: int
    keywords: KeywordList
    detections: list[Detection]
    result: RefinementResult
    resume_key: str
    started_at: str = ""
    finished_at: str = ""

    def to_record(self) -> dict:
        out: dict = {
            "session_id": self.session_id,
            "image_id": self.image_id,
            "context_turns_used": self.context_turns_used,
            "keywords": {
                "keywords": list(self.keywords.keywords),
                "source": self.keywords.source,
            },
            "detections": [
                {
                    "box": [d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max],
                    "phrase": d.phrase,
                    "box_score": d.box_score,
                    "phrase_score": d.phrase_score,
                }
                for d in self.detections
            ],
            "result": {
                "status": self.result.status,
                "area_ratio": self.result.area_ratio,
                "reason": self.result.reason,
            },
            "resume_key": self.resume_key,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }
        if self.result.crop_box is not None:
            b = self.result.crop_box
            out["result"]["crop_box"] = [b.x_min, b.y_min, b.x_max, b.y_max]
        return out

    @classmethod
    def from_record(cls, raw: dict) -> "ProvenanceRecord":
        crop = raw["result"].get("crop_box")
        result = RefinementResult(
            image_id=raw["image_id"],
            status=raw["result"]["status"],
            area_ratio=raw["result"]["area_ratio"],
            reason=raw["result"]["reason"],
            crop_box=Box(*crop) if crop else None,
        )
        return cls(
            session_id=raw["session_id"],
            image_id=raw["image_id"],
            context_turns_used=raw["context_turns_used"],
            keywords=KeywordList(
                keywords=tuple(raw["keywords"]["keywords"]),
                source=raw["keywords"]["source"],
            ),
            detections=[
                Detection(box=Box(*d["box"]), phrase=d["phrase"],
                          box_score=d["box_score"],
                          phrase_score=d["phrase_score"])
                for d in raw.get("detections", [])
            ],
            result=result,
            resume_key=raw.get("resume_key", ""),
            started_at=raw.get("started_at", ""),
            finished_at=raw.get("finished_at", ""),
        )


def write_provenance(records: Iterable[ProvenanceRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_record(), ensure_ascii=False,
                                separators=(",", ":")) + "\n")


def read_provenance(source: Union[str, Path, TextIO]) -> list[ProvenanceRecord]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return [ProvenanceRecord.from_record(json.loads(line))
                    for line in fh if line.strip()]
    return [ProvenanceRecord.from_record(json.loads(line))
            for line in source if line.strip()]


def refined_uri(item: ImageItem) -> str:
    """URI of the refined file: ``<image_id>.refined.<ext>`` beside the
    original."""
    original = PurePosixPath(item.uri)
    suffix = original.suffix  # keeps the original encoding's extension
    name = f"{item.image_id}.refined{suffix}"
    parent = original.parent
    return name if str(parent) == "." else str(parent / name)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _resume_key(image_bytes: Optional[bytes], cfg: PipelineConfig) -> str:
    digest = (hashlib.sha256(image_bytes).hexdigest()[:16]
              if image_bytes is not None else "unreadable")
    return f"{digest}-{cfg.config_hash()}"


def refine_single_image(session_id: str, item: ImageItem,
                        window, cfg: PipelineConfig, backends: Backends,
                        image_bytes: Optional[bytes],
                        ) -> tuple[ProvenanceRecord, Optional[bytes]]:
    """The shared per-image path: keywords, grounding, crop decision.

    *window* is an already-extracted context window; *image_bytes* may be
    None when the file could not be read, which degrades to unchanged.
    Used by both the batch pipeline and the single-image service endpoint
    so the two stay behaviorally identical.
    """
    started = _now()
    keywords = KeywordList(keywords=(), source="fallback")
    detections: list[Detection] = []
    upstream: RefineReason = "ok"

    if not window:
        upstream = "no_context"
    else:
        keywords = extract_keywords(
            window, backends.textgen, max_keywords=cfg.max_keywords,
            target_language=cfg.target_language, fallback=backends.fallback)
        if not keywords:
            upstream = "no_keywords"

    if upstream == "ok":
        if image_bytes is None:
            # unreadable file: skip grounding, keep the original record
            upstream = "backend_error"
        else:
            try:
                detections = ground(item, keywords, cfg.grounding,
                                    backends.grounding,
                                    image_bytes=image_bytes,
                                    error_mode="raise")
            except BackendError as exc:
                log.warning("grounding failed for image %s: %s",
                            item.image_id, exc)
                upstream = "backend_error"

    try:
        result, out_bytes = refine_image(item, detections, upstream,
                                         image_bytes=image_bytes)
    except (ImageDecodeError, ValueError, OSError) as exc:
        log.warning("refinement failed for image %s, keeping original: %s",
                    item.image_id, exc)
        result = RefinementResult(image_id=item.image_id, status="unchanged",
                                  area_ratio=1.0, reason="backend_error")
        out_bytes = image_bytes

    record = ProvenanceRecord(
        session_id=session_id,
        image_id=item.image_id,
        context_turns_used=window.turns_used if window else 0,
        keywords=keywords,
        detections=detections,
        result=result,
        resume_key=_resume_key(image_bytes, cfg),
        started_at=started,
        finished_at=_now(),
    )
    return record, out_bytes


def _updated_item(item: ImageItem, result: RefinementResult) -> ImageItem:
    if result.status != "cropped":
        return item
    box = result.crop_box
    return replace(item, uri=refined_uri(item), width=box.width,
                   height=box.height)


def refine_dataset(dataset: Dataset, cfg: PipelineConfig, backends: Backends,
                   image_root: Union[str, Path],
                   resume_from: Sequence[ProvenanceRecord] = (),
                   ) -> tuple[Dataset, list[ProvenanceRecord]]:
    """Refine every image in *dataset*, returning the rewritten dataset and
    one provenance record per image in dataset order.

    Image URIs resolve against *image_root*; cropped outputs land beside
    their originals.  Records in *resume_from* whose resume key still
    matches (same image bytes, same configuration, and the refined file
    still present) are reused without any backend traffic.
    """
    image_root = Path(image_root)
    resumable = {(r.image_id, r.resume_key): r for r in resume_from}

    jobs: list[tuple[Session, ImageItem]] = [
        (session, item) for session, item in dataset.iter_images()
    ]

    def run_one(job: tuple[Session, ImageItem]) -> ProvenanceRecord:
        session, item = job
        path = image_root / PurePosixPath(item.uri)
        try:
            image_bytes = path.read_bytes()
        except OSError:
            log.warning("cannot read image %s at %s", item.image_id, path)
            image_bytes = None

        key = (item.image_id, _resume_key(image_bytes, cfg))
        prior = resumable.get(key)
        if prior is not None and prior.session_id == session.session_id:
            if prior.result.status != "cropped":
                return prior
            out_path = image_root / PurePosixPath(
                refined_uri(item))
            if out_path.exists():
                return prior
            log.info("refined file for %s missing, recomputing",
                     item.image_id)

        window = extract_context(session, item.image_id, cfg.context_turns)
        record, out_bytes = refine_single_image(
            session.session_id, item, window, cfg, backends, image_bytes)
        if record.result.status == "cropped" and out_bytes is not None:
            out_path = image_root / PurePosixPath(refined_uri(item))
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.write_bytes(out_bytes)
        return record

    if jobs:
        with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
            records = list(pool.map(run_one, jobs))
    else:
        records = []

    by_image = {rec.image_id: rec for rec in records}
    refined_sessions = []
    for session in dataset.sessions:
        new_turns = []
        for turn in session.turns:
            new_items = [
                _updated_item(item, by_image[item.image_id].result)
                if isinstance(item, ImageItem) else item
                for item in turn.items
            ]
            new_turns.append(Turn(index=turn.index, role=turn.role,
                                  items=new_items, extra=dict(turn.extra)))
        refined_sessions.append(Session(
            session_id=session.session_id, department=session.department,
            turns=new_turns, extra=dict(session.extra)))
    return Dataset(sessions=refined_sessions), records


# --- area-ratio statistics ---------------------------------------------------

@dataclass
class RatioHistogram:
    """Counts of area ratios over five equal, right-closed segments of
    (0, 1]."""

    counts: list[int]
    population: Population
    total: int
    percentages: Optional[list[float]] = None

    edges: tuple[float, ...] = field(default=HISTOGRAM_EDGES, repr=False)

    def to_record(self) -> dict:
        return {
            "population": self.population,
            "total": self.total,
            "segments": [
                {
                    "range": f"({self.edges[i] - 0.2:.1f},{self.edges[i]:.1f}]",
                    "count": self.counts[i],
                    "percentage": (None if self.percentages is None
                                   else self.percentages[i]),
                }
                for i in range(len(self.counts))
            ],
        }

    def format_table(self) -> str:
        lines = [f"area-ratio histogram ({self.population}, "
                 f"n={self.total})"]
        for seg in self.to_record()["segments"]:
            pct = ("    --" if seg["percentage"] is None
                   else f"{seg['percentage']:6.2f}%")
            lines.append(f"  {seg['range']:>10}  {seg['count']:6d}  {pct}")
        return "\n".join(lines)


def _bin_index(ratio: float) -> int:
    for i, edge in enumerate(HISTOGRAM_EDGES):
        if ratio <= edge:
            return i
    raise ValueError(f"area ratio {ratio} outside (0, 1]")


def ratio_histogram(records: Sequence[ProvenanceRecord],
                    population: Population = "all_images") -> RatioHistogram:
    """Bucket per-image area ratios into the five segments.

    ``all_images`` counts every image (unchanged ones sit at ratio 1 in
    the top segment); ``cropped_only`` counts only images that were
    actually cropped.  An empty selection yields zero counts with the
    percentages flagged unavailable.
    """
    if population == "cropped_only":
        ratios = [r.result.area_ratio for r in records
                  if r.result.status == "cropped"]
    else:
        ratios = [r.result.area_ratio for r in records]
    counts = [0] * len(HISTOGRAM_EDGES)
    for ratio in ratios:
        if not 0.0 < ratio <= 1.0:
            raise ValueError(f"area ratio {ratio} outside (0, 1]")
        counts[_bin_index(ratio)] += 1
    total = len(ratios)
    percentages = ([100.0 * c / total for c in counts] if total else None)
    return RatioHistogram(counts=counts, population=population, total=total,
                          percentages=percentages)
