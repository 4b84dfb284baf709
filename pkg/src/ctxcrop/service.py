"""Rating and refinement service.

Serves blind double-stimulus rating tasks to the browser console, accepts
score submissions, reports the assessment metrics, and exposes the
per-image refinement path for inference-time use.

Blinding: each task shows two anonymized responses labeled A and B.  The
label order is a deterministic pseudo-random function of (seed, task_id),
so restarts and replays keep the same order, and the mapping never leaves
the server.  Submissions are de-randomized into treatment/reference
scores and appended to a line-delimited store, flushed per submission, so
evaluator work survives a crash.
"""

from __future__ import annotations

import hashlib
import io
import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, File, Form, Header, HTTPException, UploadFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image, UnidentifiedImageError

import base64

from .assessment import (IncompleteRatingsError, RatingRecord, RatingSet,
                         load_rubric, metric_report)
from .context import ContextWindow
from .dialogue import ImageItem
from .pipeline import Backends, PipelineConfig, ProvenanceRecord, \
    refine_single_image

DEFAULT_MAX_UPLOAD_BYTES = 8 * 1024 * 1024


def ab_order(seed: int, task_id: str) -> bool:
    """True when label A carries the treatment condition for this task."""
    digest = hashlib.sha256(f"{seed}:{task_id}".encode("utf-8")).digest()
    return digest[0] % 2 == 0


@dataclass
class RatingTask:
    """One unit of rating work, loaded from the tasks file."""

    task_id: str
    session_id: str
    response_index: int
    excerpt: list  # dialogue-schema turn records shown to the evaluator
    response_treatment: str
    response_reference: str
    image_id: Optional[str] = None

    @classmethod
    def from_record(cls, raw: dict) -> "RatingTask":
        return cls(
            task_id=str(raw["task_id"]),
            session_id=str(raw["session_id"]),
            response_index=int(raw["response_index"]),
            excerpt=raw.get("excerpt", []),
            response_treatment=raw["response_treatment"],
            response_reference=raw["response_reference"],
            image_id=raw.get("image_id"),
        )

    def blind_payload(self, seed: int) -> dict:
        """The task as the console sees it: labels only, no conditions."""
        a_is_treatment = ab_order(seed, self.task_id)
        first, second = (
            (self.response_treatment, self.response_reference)
            if a_is_treatment
            else (self.response_reference, self.response_treatment))
        return {
            "task_id": self.task_id,
            "session_id": self.session_id,
            "response_index": self.response_index,
            "excerpt": self.excerpt,
            "response_a": first,
            "response_b": second,
        }


def load_tasks(path) -> list[RatingTask]:
    tasks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                tasks.append(RatingTask.from_record(json.loads(line)))
    return tasks


class RatingsStore:
    """Append-only, line-delimited store of de-randomized submissions."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._done: set[tuple[str, str]] = set()  # (evaluator token idx, task)
        self._records: list[dict] = []
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    raw = json.loads(line)
                    self._records.append(raw)
                    self._done.add((str(raw["evaluator"]), raw["task_id"]))

    def already_rated(self, evaluator, task_id: str) -> bool:
        return (str(evaluator), task_id) in self._done

    def append(self, record: dict) -> None:
        with self._lock:
            key = (str(record["evaluator"]), record["task_id"])
            if key in self._done:
                raise KeyError(f"task {record['task_id']} already rated")
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False,
                                    separators=(",", ":")) + "\n")
                fh.flush()
            self._records.append(record)
            self._done.add(key)

    def rating_set(self) -> RatingSet:
        return RatingSet(records=[
            RatingRecord(
                evaluator=raw["evaluator"],
                session=raw["session"],
                response_index=raw["response_index"],
                score_treatment=raw["score_treatment"],
                score_reference=raw["score_reference"],
                image_id=raw.get("image_id"),
            )
            for raw in self._records
        ])

    def __len__(self) -> int:
        return len(self._records)


@dataclass
class ServiceState:
    """Everything the endpoints need, wired once at startup."""

    seed: int
    tasks: list[RatingTask]
    evaluators: dict[str, int]  # bearer token -> evaluator index
    store: RatingsStore
    cfg: PipelineConfig = field(default_factory=PipelineConfig)
    backends: Optional[Backends] = None
    provenance: Optional[list[ProvenanceRecord]] = None
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES


def load_evaluators(path) -> dict[str, int]:
    """Token registry: ``{"token": index}`` or ``{"token": {"index": n}}``."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for token, value in raw.items():
        out[token] = value["index"] if isinstance(value, dict) else int(value)
    return out


def create_app(state: ServiceState, static_dir=None,
               images_dir=None) -> FastAPI:
    app = FastAPI(title="ctxcrop rating and refinement service")
    rubric = load_rubric()

    def evaluator_for(authorization: Optional[str]) -> int:
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401,
                                detail="missing bearer token")
        token = authorization.removeprefix("Bearer ").strip()
        if token not in state.evaluators:
            raise HTTPException(status_code=401,
                                detail="unknown evaluator token")
        return state.evaluators[token]

    def progress_for(evaluator: int) -> dict:
        rated = sum(1 for t in state.tasks
                    if state.store.already_rated(evaluator, t.task_id))
        return {"rated": rated, "total": len(state.tasks)}

    @app.get("/api/rubric")
    def get_rubric():
        return {"grades": [{"score": s, "description": rubric[s]}
                           for s in sorted(rubric, reverse=True)]}

    @app.get("/api/tasks/next")
    def next_task(authorization: Optional[str] = Header(default=None)):
        evaluator = evaluator_for(authorization)
        for task in state.tasks:
            if not state.store.already_rated(evaluator, task.task_id):
                payload = task.blind_payload(state.seed)
                payload["rubric"] = [
                    {"score": s, "description": rubric[s]}
                    for s in sorted(rubric, reverse=True)]
                payload["progress"] = progress_for(evaluator)
                payload["exhausted"] = False
                return payload
        return {"exhausted": True, "progress": progress_for(evaluator)}

    @app.post("/api/ratings")
    def submit_rating(body: dict,
                      authorization: Optional[str] = Header(default=None)):
        evaluator = evaluator_for(authorization)
        task_id = str(body.get("task_id", ""))
        task = next((t for t in state.tasks if t.task_id == task_id), None)
        if task is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown task {task_id!r}")
        try:
            score_a = int(body["score_a"])
            score_b = int(body["score_b"])
        except (KeyError, TypeError, ValueError):
            raise HTTPException(status_code=400,
                                detail="score_a and score_b are required")
        if not (0 <= score_a <= 4 and 0 <= score_b <= 4):
            raise HTTPException(status_code=400,
                                detail="scores must be integers in 0..4")
        if state.store.already_rated(evaluator, task_id):
            raise HTTPException(status_code=409,
                                detail=f"task {task_id!r} already rated")
        a_is_treatment = ab_order(state.seed, task_id)
        score_treatment = score_a if a_is_treatment else score_b
        score_reference = score_b if a_is_treatment else score_a
        record = {
            "task_id": task_id,
            "evaluator": evaluator,
            "session": task.session_id,
            "response_index": task.response_index,
            "score_treatment": score_treatment,
            "score_reference": score_reference,
            "submitted_at": datetime.now(timezone.utc).isoformat(
                timespec="milliseconds"),
        }
        if task.image_id is not None:
            record["image_id"] = task.image_id
        try:
            state.store.append(record)
        except KeyError:
            raise HTTPException(status_code=409,
                                detail=f"task {task_id!r} already rated")
        return {"accepted": True, "task_id": task_id,
                "progress": progress_for(evaluator)}

    @app.get("/api/reports/dmos")
    def report_dmos():
        if len(state.store) == 0:
            raise HTTPException(status_code=409,
                                detail="ratings store is empty")
        rating_set = state.store.rating_set()
        try:
            report = metric_report(
                rating_set,
                prov=state.provenance,
                cutoff=state.cfg.crop_cutoff,
            )
        except IncompleteRatingsError as exc:
            return JSONResponse(status_code=200, content={
                "complete": False,
                "missing": [list(map(str, triple)) for triple in exc.missing],
            })
        return {"complete": True, "report": report.to_record()}

    @app.post("/api/refine")
    async def refine_endpoint(
            image: UploadFile = File(...),
            context: str = Form("[]"),
            image_id: str = Form("")):
        if state.backends is None:
            raise HTTPException(status_code=503,
                                detail="refinement backends not configured")
        data = await image.read()
        if len(data) > state.max_upload_bytes:
            raise HTTPException(
                status_code=413,
                detail=f"payload exceeds {state.max_upload_bytes} bytes")
        try:
            entries_raw = json.loads(context)
            if not isinstance(entries_raw, list):
                raise ValueError("context must be a JSON array")
        except (json.JSONDecodeError, ValueError) as exc:
            raise HTTPException(status_code=400,
                                detail=f"bad context field: {exc}")
        entries = []
        for entry in entries_raw:
            if isinstance(entry, str):
                entries.append(("patient", entry))
            elif isinstance(entry, dict) and "text" in entry:
                entries.append((entry.get("role", "patient"), entry["text"]))
            else:
                raise HTTPException(
                    status_code=400,
                    detail="context entries must be strings or "
                           "{role, text} objects")
        try:
            probe = Image.open(io.BytesIO(data))
            width, height = probe.size
        except (UnidentifiedImageError, OSError):
            raise HTTPException(status_code=400,
                                detail="image payload is not decodable")
        item_id = image_id or hashlib.sha256(data).hexdigest()[:12]
        item = ImageItem(image_id=item_id, uri=image.filename or "",
                         width=width, height=height)
        window = ContextWindow(image_id=item_id, entries=tuple(entries),
                               turns_used=len(entries))
        record, out_bytes = refine_single_image(
            session_id="", item=item, window=window, cfg=state.cfg,
            backends=state.backends, image_bytes=data)
        payload = record.to_record()
        payload.pop("session_id")
        if record.result.status == "cropped" and out_bytes is not None:
            payload["refined_image"] = base64.b64encode(out_bytes).decode(
                "ascii")
        return payload

    if images_dir:
        app.mount("/images", StaticFiles(directory=str(images_dir)),
                  name="images")
    if static_dir and Path(static_dir).exists():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="console")
    return app
