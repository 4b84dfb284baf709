"""Double-stimulus subjective assessment arithmetic.

Each rated response carries two scores on the five-grade scale: one for
the treatment condition and one for the reference condition.  The per
rating difference (treatment minus reference) is aggregated two ways:

* session level: mean difference over all evaluators and all rated
  responses of one session;
* image level: mean difference over evaluators for the response
  addressing one patient image, optionally restricted to images whose
  crop retained less than a cutoff fraction of the original area.

Raw per-condition means (MOS) use the same grids without differencing.
Significance against the zero-difference null is a two-sided one-sample
t-test by default, with the Wilcoxon signed-rank test selectable; the
choice is reported, never implied.

Rating grids must be complete: every rated response needs a score from
every evaluator in the set.  Holes fail loudly with the missing triples
listed, because silently averaging whoever showed up would bias every
number derived here.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Literal, Mapping, Optional, Sequence, TextIO, Union

import numpy as np
from scipy import stats

from .refine import RefinementResult

SCORE_RANGE = (0, 1, 2, 3, 4)

EvaluatorId = Union[int, str]
SessionId = Union[int, str]

DEFAULT_CROP_CUTOFF = 0.7

TestMethod = Literal["t_test", "wilcoxon"]


class RatingValidationError(ValueError):
    """A rating record violates the score range or uniqueness rules."""


class IncompleteRatingsError(ValueError):
    """The rating grid has holes; carries the missing triples."""

    def __init__(self, missing: Sequence[tuple]):
        self.missing = list(missing)
        shown = ", ".join(map(str, self.missing[:10]))
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(
            f"{len(self.missing)} missing (evaluator, session, response) "
            f"ratings: {shown}{more}")


class MissingProvenanceError(KeyError):
    """A rated image has no refinement record to look its area ratio up in."""


@dataclass(frozen=True)
class RatingRecord:
    """One evaluator's paired scores for one response.

    ``image_id`` links the response to the patient image it addresses,
    when there is one; only linked records enter image-level metrics.
    """

    evaluator: EvaluatorId
    session: SessionId
    response_index: int
    score_treatment: int
    score_reference: int
    image_id: Optional[str] = None

    def __post_init__(self):
        for name in ("score_treatment", "score_reference"):
            value = getattr(self, name)
            if not isinstance(value, int) or value not in SCORE_RANGE:
                raise RatingValidationError(
                    f"{name} must be an integer in 0..4, got {value!r} "
                    f"(evaluator={self.evaluator}, session={self.session}, "
                    f"response={self.response_index})")
        if self.response_index < 1:
            raise RatingValidationError(
                f"response_index must be >= 1, got {self.response_index}")

    @property
    def diff(self) -> int:
        return score_diff(self.score_treatment, self.score_reference)


def score_diff(score_treatment: int, score_reference: int) -> int:
    """Treatment score minus reference score, in [-4, 4]."""
    for name, value in (("treatment", score_treatment),
                        ("reference", score_reference)):
        if not isinstance(value, int) or value not in SCORE_RANGE:
            raise RatingValidationError(
                f"{name} score must be an integer in 0..4, got {value!r}")
    return score_treatment - score_reference


@dataclass
class RatingSet:
    """A validated collection of rating records.

    Derived fields index the grid: evaluators and sessions in first-seen
    order, the rated response indices per session, and the linked images.
    """

    records: list[RatingRecord] = field(default_factory=list)

    def __post_init__(self):
        seen: set[tuple] = set()
        for rec in self.records:
            key = (rec.evaluator, rec.session, rec.response_index)
            if key in seen:
                raise RatingValidationError(
                    f"duplicate rating for (evaluator, session, response) "
                    f"= {key}")
            seen.add(key)

    @property
    def evaluators(self) -> list[EvaluatorId]:
        out: list[EvaluatorId] = []
        for rec in self.records:
            if rec.evaluator not in out:
                out.append(rec.evaluator)
        return out

    @property
    def sessions(self) -> list[SessionId]:
        out: list[SessionId] = []
        for rec in self.records:
            if rec.session not in out:
                out.append(rec.session)
        return out

    def responses(self, session: SessionId) -> list[int]:
        out: list[int] = []
        for rec in self.records:
            if rec.session == session and rec.response_index not in out:
                out.append(rec.response_index)
        return sorted(out)

    @property
    def images(self) -> list[str]:
        out: list[str] = []
        for rec in self.records:
            if rec.image_id is not None and rec.image_id not in out:
                out.append(rec.image_id)
        return out

    def check_complete(self) -> None:
        """Verify every (session, response) was rated by every evaluator."""
        have = {(r.evaluator, r.session, r.response_index)
                for r in self.records}
        missing = []
        for s in self.sessions:
            for m in self.responses(s):
                for n in self.evaluators:
                    if (n, s, m) not in have:
                        missing.append((n, s, m))
        if missing:
            raise IncompleteRatingsError(missing)


def session_dmos(rs: RatingSet) -> dict[SessionId, float]:
    """Per-session mean score difference over evaluators and responses."""
    rs.check_complete()
    diffs: dict[SessionId, list[int]] = {s: [] for s in rs.sessions}
    for rec in rs.records:
        diffs[rec.session].append(rec.diff)
    return {s: float(np.mean(d)) for s, d in diffs.items()}


def image_dmos(rs: RatingSet) -> dict[str, float]:
    """Per-image mean score difference over evaluators.

    The difference for image *i* under evaluator *n* comes from the rated
    response addressing *i*; when an evaluator rated several responses
    linked to the same image, their differences average per evaluator
    before the cross-evaluator mean.  Every linked image must be covered
    by every evaluator in the set.
    """
    evaluators = rs.evaluators
    per_image: dict[str, dict[EvaluatorId, list[int]]] = {}
    for rec in rs.records:
        if rec.image_id is None:
            continue
        per_image.setdefault(rec.image_id, {}).setdefault(
            rec.evaluator, []).append(rec.diff)
    missing = []
    for image_id, by_eval in per_image.items():
        for n in evaluators:
            if n not in by_eval:
                missing.append((n, image_id))
    if missing:
        raise IncompleteRatingsError(missing)
    return {
        image_id: float(np.mean([np.mean(by_eval[n]) for n in evaluators]))
        for image_id, by_eval in per_image.items()
    }


def _ratio_lookup(prov) -> Mapping[str, RefinementResult]:
    if isinstance(prov, Mapping):
        return prov
    # duck-typed provenance records: .image_id plus .result
    return {p.image_id: p.result for p in prov}


def cropped_image_dmos(rs: RatingSet, prov,
                       cutoff: float = DEFAULT_CROP_CUTOFF) -> dict[str, float]:
    """Image-level DMOS restricted to obviously cropped images.

    Keeps exactly the images whose refinement cropped them to strictly
    less than *cutoff* of the original area.  *prov* is a mapping from
    image_id to :class:`RefinementResult` or an iterable of provenance
    records carrying one.
    """
    lookup = _ratio_lookup(prov)
    full = image_dmos(rs)
    for image_id in full:
        if image_id not in lookup:
            raise MissingProvenanceError(
                f"rated image {image_id!r} has no refinement record")
    return {
        image_id: value for image_id, value in full.items()
        if lookup[image_id].status == "cropped"
        and lookup[image_id].area_ratio < cutoff
    }


def significance_test(values: Sequence[float],
                      method: TestMethod = "t_test") -> float:
    """Two-sided p-value against the null of zero mean difference.

    Degenerate inputs short-circuit: all-zero values give p = 1 (nothing
    to distinguish), while zero variance around a nonzero mean gives the
    machine-epsilon upper bound (the test statistic diverges).
    """
    if len(values) < 2:
        raise ValueError("significance test needs at least 2 values")
    arr = np.asarray(values, dtype=float)
    if np.ptp(arr) == 0.0:
        return 1.0 if arr[0] == 0.0 else sys.float_info.epsilon
    if method == "t_test":
        return float(stats.ttest_1samp(arr, 0.0).pvalue)
    if method == "wilcoxon":
        nonzero = arr[arr != 0.0]
        if nonzero.size == 0:
            return 1.0
        return float(stats.wilcoxon(arr).pvalue)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class DmosSummary:
    """Mean of a DMOS collection with its significance against zero."""

    mean: float
    p_value: Optional[float]
    n: int
    degenerate: bool = False


def averaged_dmos(values: Union[Mapping, Sequence[float]],
                  method: TestMethod = "t_test") -> DmosSummary:
    """Average a DMOS collection and test it against the zero null.

    A single value yields its mean with the p-value unavailable; an empty
    collection is an error.  Zero-variance collections are flagged."""
    if values is None or len(values) == 0:
        raise ValueError("cannot average an empty DMOS collection")
    data = list(values.values()) if isinstance(values, Mapping) else list(values)
    mean = float(np.mean(data))
    if len(data) < 2:
        return DmosSummary(mean=mean, p_value=None, n=1)
    degenerate = float(np.ptp(data)) == 0.0
    p = significance_test(data, method=method)
    return DmosSummary(mean=mean, p_value=p, n=len(data),
                       degenerate=degenerate)


def mos(rs: RatingSet,
        condition: Literal["treatment", "reference"]) -> float:
    """Mean opinion score for one condition: per-session means of raw
    scores, then the mean over sessions."""
    rs.check_complete()
    field_name = ("score_treatment" if condition == "treatment"
                  else "score_reference")
    per_session: dict[SessionId, list[int]] = {s: [] for s in rs.sessions}
    for rec in rs.records:
        per_session[rec.session].append(getattr(rec, field_name))
    if not per_session:
        raise ValueError("cannot compute MOS of an empty rating set")
    session_means = [float(np.mean(scores))
                     for scores in per_session.values()]
    return float(np.mean(session_means))


@dataclass
class MetricReport:
    """Everything the assessment produces for one rating study."""

    session_level: dict[SessionId, float]
    image_level: dict[str, float]
    cropped_image_level: dict[str, float]
    session_summary: DmosSummary
    image_summary: Optional[DmosSummary]
    cropped_summary: Optional[DmosSummary]
    mos_treatment: float
    mos_reference: float
    method: TestMethod
    cutoff: float

    def to_record(self) -> dict:
        def summary(s: Optional[DmosSummary]):
            if s is None:
                return None
            return {"mean": s.mean, "p_value": s.p_value, "n": s.n,
                    "degenerate": s.degenerate}

        return {
            "session_dmos": {str(k): v for k, v in self.session_level.items()},
            "image_dmos": self.image_level,
            "cropped_image_dmos": self.cropped_image_level,
            "averaged": {
                "session": summary(self.session_summary),
                "image": summary(self.image_summary),
                "cropped_image": summary(self.cropped_summary),
            },
            "mos": self.mos_treatment,
            "mos_ref": self.mos_reference,
            "method": self.method,
            "cutoff": self.cutoff,
        }


def metric_report(rs: RatingSet, prov=None,
                  cutoff: float = DEFAULT_CROP_CUTOFF,
                  method: TestMethod = "t_test") -> MetricReport:
    """Run the full assessment over a complete rating set.

    The cropped-image level needs provenance; without it that level is
    reported empty.  Image levels are skipped when no record links an
    image."""
    sess = session_dmos(rs)
    img = image_dmos(rs) if rs.images else {}
    cropped = (cropped_image_dmos(rs, prov, cutoff)
               if img and prov is not None else {})
    return MetricReport(
        session_level=sess,
        image_level=img,
        cropped_image_level=cropped,
        session_summary=averaged_dmos(sess, method=method),
        image_summary=averaged_dmos(img, method=method) if img else None,
        cropped_summary=(averaged_dmos(cropped, method=method)
                         if cropped else None),
        mos_treatment=mos(rs, "treatment"),
        mos_reference=mos(rs, "reference"),
        method=method,
        cutoff=cutoff,
    )


# --- rating file schema -----------------------------------------------------

def parse_ratings(stream: Union[TextIO, Iterable[str]]) -> RatingSet:
    """Parse line-delimited rating records.

    Schema per line: ``{"evaluator", "session", "response_index",
    "image_id"?, "score_treatment", "score_reference"}``.
    """
    records = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RatingValidationError(
                f"line {line_no}: invalid JSON: {exc.msg}") from exc
        try:
            records.append(RatingRecord(
                evaluator=raw["evaluator"],
                session=raw["session"],
                response_index=int(raw["response_index"]),
                score_treatment=int(raw["score_treatment"]),
                score_reference=int(raw["score_reference"]),
                image_id=raw.get("image_id"),
            ))
        except KeyError as exc:
            raise RatingValidationError(
                f"line {line_no}: missing field {exc.args[0]!r}") from exc
        except RatingValidationError as exc:
            raise RatingValidationError(f"line {line_no}: {exc}") from exc
    return RatingSet(records=records)


def load_ratings(path) -> RatingSet:
    with open(path, encoding="utf-8") as fh:
        return parse_ratings(fh)


def rating_to_record(rec: RatingRecord) -> dict:
    out = {
        "evaluator": rec.evaluator,
        "session": rec.session,
        "response_index": rec.response_index,
    }
    if rec.image_id is not None:
        out["image_id"] = rec.image_id
    out["score_treatment"] = rec.score_treatment
    out["score_reference"] = rec.score_reference
    return out


def load_rubric() -> dict[int, str]:
    """The five-grade rubric shipped with the package, keyed 0..4."""
    raw = json.loads(resources.files("ctxcrop").joinpath(
        "assets", "rubric.json").read_text(encoding="utf-8"))
    return {int(k): v for k, v in raw.items()}
