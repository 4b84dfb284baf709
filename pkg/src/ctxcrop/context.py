"""Selection of the textual context preceding an image in a session.

The grounding query for an image is built from the text of the last few
turns before the image appears.  Only turns that actually contribute text
count toward the turn budget: a turn holding nothing but images is skipped
without consuming budget, since it adds no words for keyword extraction.
Text items sitting before the image inside the same turn are the most
image-adjacent context of all; they are included and consume one slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dialogue import Role, Session, Text


class UnknownImageError(KeyError):
    """Raised when an image_id does not occur in the given session."""


@dataclass(frozen=True)
class ContextWindow:
    """Ordered (role, text) entries preceding one image, oldest first."""

    image_id: str
    entries: tuple[tuple[Role, str], ...] = field(default_factory=tuple)
    turns_used: int = 0

    def __bool__(self) -> bool:
        return bool(self.entries)

    @property
    def texts(self) -> list[str]:
        return [text for _, text in self.entries]


def extract_context(session: Session, image_id: str,
                    max_turns: int = 3) -> ContextWindow:
    """Collect the text of the last ``max_turns`` text-bearing turns before
    *image_id*'s position in *session*.

    Both roles are eligible.  Entries come back oldest first.  Raises
    :class:`UnknownImageError` if the image is not in the session and
    ``ValueError`` for a negative *max_turns*.
    """
    if max_turns < 0:
        raise ValueError(f"max_turns must be >= 0, got {max_turns}")

    position = None
    for ti, ii, item in session.iter_images():
        if item.image_id == image_id:
            position = (ti, ii)
            break
    if position is None:
        raise UnknownImageError(
            f"image {image_id!r} not found in session {session.session_id!r}")
    image_turn, image_item = position

    # Group candidate text per turn, walking backwards from the image.
    groups: list[list[tuple[Role, str]]] = []
    for ti in range(image_turn, -1, -1):
        if len(groups) >= max_turns:
            break
        turn = session.turns[ti]
        cutoff = image_item if ti == image_turn else len(turn.items)
        texts = [
            (turn.role, item.body)
            for item in turn.items[:cutoff]
            if isinstance(item, Text)
        ]
        if texts:
            groups.append(texts)

    groups.reverse()
    entries = tuple(entry for group in groups for entry in group)
    return ContextWindow(image_id=image_id, entries=entries,
                         turns_used=len(groups))
