"""Dialogue data model and line-delimited serialization.

A consultation is a :class:`Session` of ordered :class:`Turn` objects, each
holding one or more text/image items from a single role.  Sessions live in
line-delimited JSON files, one session per line, UTF-8, with unknown fields
preserved across a parse/serialize round trip.

Pixel geometry uses integer coordinates, origin at the top-left corner, and
half-open boxes ``[x_min, x_max) x [y_min, y_max)`` so that widths, heights
and areas are plain differences with no off-by-one adjustments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Literal, TextIO, Union

Role = Literal["patient", "doctor"]

ROLES = ("patient", "doctor")


class RecordError(ValueError):
    """A malformed or invariant-violating record in a dataset stream.

    Carries the 1-based line number (0 for errors that are not tied to a
    specific line) and a dotted field path such as ``turns[1].items[0].role``.
    """

    def __init__(self, message: str, *, line_no: int = 0, path: str = ""):
        self.line_no = line_no
        self.path = path
        where = []
        if line_no:
            where.append(f"line {line_no}")
        if path:
            where.append(path)
        prefix = " ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


@dataclass(frozen=True)
class Box:
    """Axis-aligned pixel box, half-open on both axes."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"box coordinates must be >= 0, got {self}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError(f"box must have positive extent, got {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min


def box_area(b: Box) -> int:
    """Pixel count covered by *b*; always positive for a valid box."""
    return b.width * b.height


@dataclass(frozen=True)
class Text:
    """A text item inside a turn."""

    body: str
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ImageItem:
    """An image item inside a turn.

    ``uri`` is a locator resolved against the run's image root; image bytes
    are never embedded in the record stream.
    """

    image_id: str
    uri: str
    width: int
    height: int
    extra: dict = field(default_factory=dict, compare=True)


ContentItem = Union[Text, ImageItem]


@dataclass
class Turn:
    """One message bubble from one role, holding ordered content items."""

    index: int
    role: Role
    items: list[ContentItem]
    extra: dict = field(default_factory=dict)


@dataclass
class Session:
    """One complete multi-turn consultation."""

    session_id: str
    department: str
    turns: list[Turn]
    extra: dict = field(default_factory=dict)

    def iter_images(self) -> Iterator[tuple[int, int, ImageItem]]:
        """Yield (turn_index, item_index, item) for every image in order."""
        for ti, turn in enumerate(self.turns):
            for ii, item in enumerate(turn.items):
                if isinstance(item, ImageItem):
                    yield ti, ii, item


@dataclass
class Dataset:
    """Ordered collection of sessions with unique session and image ids."""

    sessions: list[Session] = field(default_factory=list)

    def iter_images(self) -> Iterator[tuple[Session, ImageItem]]:
        for session in self.sessions:
            for _, _, item in session.iter_images():
                yield session, item


# --- validation -------------------------------------------------------------

def _need(record: dict, key: str, kind: type, *, line_no: int, path: str) -> Any:
    if key not in record:
        raise RecordError(f"missing field `{key}`", line_no=line_no, path=path)
    value = record[key]
    if kind is int:
        # bool is an int subclass; reject it explicitly
        if isinstance(value, bool) or not isinstance(value, int):
            raise RecordError(
                f"field `{key}` must be an integer, got {value!r}",
                line_no=line_no, path=f"{path}.{key}" if path else key,
            )
    elif not isinstance(value, kind):
        raise RecordError(
            f"field `{key}` must be {kind.__name__}, got {value!r}",
            line_no=line_no, path=f"{path}.{key}" if path else key,
        )
    return value


def _parse_item(record: Any, *, line_no: int, path: str) -> ContentItem:
    if not isinstance(record, dict):
        raise RecordError("item must be an object", line_no=line_no, path=path)
    kind = _need(record, "type", str, line_no=line_no, path=path)
    if kind == "text":
        body = _need(record, "body", str, line_no=line_no, path=path)
        if not body:
            raise RecordError("text body must be non-empty",
                              line_no=line_no, path=f"{path}.body")
        extra = {k: v for k, v in record.items() if k not in ("type", "body")}
        return Text(body=body, extra=extra)
    if kind == "image":
        image_id = _need(record, "image_id", str, line_no=line_no, path=path)
        uri = _need(record, "uri", str, line_no=line_no, path=path)
        width = _need(record, "width", int, line_no=line_no, path=path)
        height = _need(record, "height", int, line_no=line_no, path=path)
        if not image_id:
            raise RecordError("image_id must be non-empty",
                              line_no=line_no, path=f"{path}.image_id")
        if width <= 0 or height <= 0:
            raise RecordError(
                f"image dimensions must be positive, got {width}x{height}",
                line_no=line_no, path=path,
            )
        known = ("type", "image_id", "uri", "width", "height")
        extra = {k: v for k, v in record.items() if k not in known}
        return ImageItem(image_id=image_id, uri=uri, width=width,
                         height=height, extra=extra)
    raise RecordError(f"unknown item type {kind!r}",
                      line_no=line_no, path=f"{path}.type")


def _parse_turn(record: Any, expected_index: int, *, line_no: int,
                path: str) -> Turn:
    if not isinstance(record, dict):
        raise RecordError("turn must be an object", line_no=line_no, path=path)
    index = _need(record, "index", int, line_no=line_no, path=path)
    if index != expected_index:
        raise RecordError(
            f"turn index {index} out of order, expected {expected_index}",
            line_no=line_no, path=f"{path}.index",
        )
    role = _need(record, "role", str, line_no=line_no, path=path)
    if role not in ROLES:
        raise RecordError(
            f"field `role` must be one of {list(ROLES)}, got {role!r}",
            line_no=line_no, path=f"{path}.role",
        )
    raw_items = _need(record, "items", list, line_no=line_no, path=path)
    if not raw_items:
        raise RecordError("turn must have at least one item",
                          line_no=line_no, path=f"{path}.items")
    items = [
        _parse_item(raw, line_no=line_no, path=f"{path}.items[{i}]")
        for i, raw in enumerate(raw_items)
    ]
    known = ("index", "role", "items")
    extra = {k: v for k, v in record.items() if k not in known}
    return Turn(index=index, role=role, items=items, extra=extra)


def parse_session(line: str, *, line_no: int = 0) -> Session:
    """Parse one session record from a JSON line."""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(f"invalid JSON: {exc.msg}", line_no=line_no) from exc
    if not isinstance(record, dict):
        raise RecordError("session record must be an object", line_no=line_no)
    session_id = _need(record, "session_id", str, line_no=line_no, path="")
    if not session_id:
        raise RecordError("session_id must be non-empty",
                          line_no=line_no, path="session_id")
    department = _need(record, "department", str, line_no=line_no, path="")
    raw_turns = _need(record, "turns", list, line_no=line_no, path="")
    if not raw_turns:
        raise RecordError("session must have at least one turn",
                          line_no=line_no, path="turns")
    turns = [
        _parse_turn(raw, i, line_no=line_no, path=f"turns[{i}]")
        for i, raw in enumerate(raw_turns)
    ]
    known = ("session_id", "department", "turns")
    extra = {k: v for k, v in record.items() if k not in known}
    return Session(session_id=session_id, department=department,
                   turns=turns, extra=extra)


def parse_dataset(stream: Union[TextIO, Iterable[str]]) -> Dataset:
    """Parse a line-delimited session stream into a validated Dataset.

    Whitespace-only lines are skipped.  Raises :class:`RecordError` with the
    line number and field path on the first malformed record, duplicate
    session_id, or duplicate image_id.
    """
    sessions: list[Session] = []
    seen_sessions: dict[str, int] = {}
    seen_images: dict[str, int] = {}
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        session = parse_session(line, line_no=line_no)
        if session.session_id in seen_sessions:
            raise RecordError(
                f"duplicate session_id {session.session_id!r} "
                f"(first seen on line {seen_sessions[session.session_id]})",
                line_no=line_no, path="session_id",
            )
        seen_sessions[session.session_id] = line_no
        for ti, ii, item in session.iter_images():
            if item.image_id in seen_images:
                raise RecordError(
                    f"duplicate image_id {item.image_id!r} "
                    f"(first seen on line {seen_images[item.image_id]})",
                    line_no=line_no, path=f"turns[{ti}].items[{ii}].image_id",
                )
            seen_images[item.image_id] = line_no
        sessions.append(session)
    return Dataset(sessions=sessions)


# --- serialization ----------------------------------------------------------

def _item_record(item: ContentItem) -> dict:
    if isinstance(item, Text):
        record = {"type": "text", "body": item.body}
        record.update(item.extra)
        return record
    record = {
        "type": "image",
        "image_id": item.image_id,
        "uri": item.uri,
        "width": item.width,
        "height": item.height,
    }
    record.update(item.extra)
    return record


def session_record(session: Session) -> dict:
    """The plain-dict form of one session, known fields first."""
    record: dict = {
        "session_id": session.session_id,
        "department": session.department,
        "turns": [],
    }
    for turn in session.turns:
        turn_rec: dict = {
            "index": turn.index,
            "role": turn.role,
            "items": [_item_record(item) for item in turn.items],
        }
        turn_rec.update(turn.extra)
        record["turns"].append(turn_rec)
    record.update(session.extra)
    return record


# Unicode line separators that json.dumps(ensure_ascii=False) leaves raw;
# they must be escaped or line-oriented readers would split mid-record.
_LINE_BREAKERS = {"": "\\u0085", " ": "\\u2028",
                  " ": "\\u2029"}


def iter_serialize(d: Dataset) -> Iterator[str]:
    """Yield one JSON line per session (no trailing newline on the lines)."""
    for session in d.sessions:
        line = json.dumps(session_record(session), ensure_ascii=False,
                          separators=(",", ":"))
        for raw, escaped in _LINE_BREAKERS.items():
            if raw in line:
                line = line.replace(raw, escaped)
        yield line


def serialize_dataset(d: Dataset) -> str:
    """Serialize a Dataset to its full line-delimited text form.

    Deterministic: the same Dataset always yields byte-identical output.
    """
    lines = list(iter_serialize(d))
    return "\n".join(lines) + ("\n" if lines else "")


def load_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh)


def dump_dataset(d: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in iter_serialize(d):
            fh.write(line + "\n")
