"""Context selection: the preceding-turns window feeding keyword extraction."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxcrop.context import UnknownImageError, extract_context
from ctxcrop.dialogue import ImageItem, Session, Text, Turn

from conftest import image, session, text, turn


def test_three_text_turns_before_image(sample_session):
    window = extract_context(sample_session, "img1")
    assert window.turns_used == 3
    assert [t for _, t in window.entries] == [
        "since when?", "two days ago", "photo attached"]
    assert [r for r, _ in window.entries] == ["doctor", "patient", "patient"]


def test_image_first_item_of_first_turn():
    s = session("s1", turn(0, "patient", image("img1"), text("after")))
    window = extract_context(s, "img1")
    assert window.turns_used == 0
    assert window.entries == ()
    assert not window


def test_five_prior_turns_keeps_last_three():
    turns = [turn(i, "patient", text(f"msg {i}")) for i in range(5)]
    turns.append(turn(5, "patient", image("img1")))
    window = extract_context(session("s1", *turns), "img1")
    assert [t for _, t in window.entries] == ["msg 2", "msg 3", "msg 4"]
    assert window.turns_used == 3


def test_unknown_image():
    s = session("s1", turn(0, "patient", text("hello")))
    with pytest.raises(UnknownImageError):
        extract_context(s, "missing")


def test_negative_max_turns_rejected(sample_session):
    with pytest.raises(ValueError):
        extract_context(sample_session, "img1", max_turns=-1)


def test_max_turns_zero_gives_empty_window(sample_session):
    window = extract_context(sample_session, "img1", max_turns=0)
    assert window.entries == ()
    assert window.turns_used == 0


def test_image_only_turns_do_not_consume_budget():
    s = session(
        "s1",
        turn(0, "patient", text("first complaint")),
        turn(1, "doctor", text("please send a photo")),
        turn(2, "patient", image("earlier")),          # image-only, skipped
        turn(3, "doctor", text("and one more angle")),
        turn(4, "patient", image("img1")),
    )
    window = extract_context(s, "img1")
    assert [t for _, t in window.entries] == [
        "first complaint", "please send a photo", "and one more angle"]
    assert window.turns_used == 3


def test_same_turn_text_before_image_included_and_counts():
    s = session(
        "s1",
        turn(0, "patient", text("a")),
        turn(1, "doctor", text("b")),
        turn(2, "patient", text("c")),
        turn(3, "patient", text("with the photo"), image("img1"),
             text("text after the image")),
    )
    window = extract_context(s, "img1")
    # own-turn text before the image is one of the three turns; text after
    # the image never appears
    assert [t for _, t in window.entries] == ["b", "c", "with the photo"]


def test_multiple_texts_in_one_turn_are_one_budget_slot():
    s = session(
        "s1",
        turn(0, "patient", text("one"), text("two")),
        turn(1, "patient", image("img1")),
    )
    window = extract_context(s, "img1")
    assert [t for _, t in window.entries] == ["one", "two"]
    assert window.turns_used == 1


# --- properties over random sessions ----------------------------------------

@st.composite
def sessions_with_images(draw):
    n_turns = draw(st.integers(1, 8))
    turns = []
    img_ids = []
    counter = 0
    for ti in range(n_turns):
        role = draw(st.sampled_from(["patient", "doctor"]))
        items = []
        for _ in range(draw(st.integers(1, 3))):
            if draw(st.booleans()):
                items.append(Text(body=f"t{ti}.{len(items)}"))
            else:
                counter += 1
                items.append(ImageItem(image_id=f"img{counter}",
                                       uri=f"img{counter}.png",
                                       width=10, height=10))
                img_ids.append(f"img{counter}")
        turns.append(Turn(index=ti, role=role, items=items))
    session = Session(session_id="s", department="d", turns=turns)
    return session, img_ids


def _position_of(session, image_id):
    for ti, ii, item in session.iter_images():
        if item.image_id == image_id:
            return ti, ii
    raise AssertionError


def _text_positions(session):
    """(turn, item) -> body for every text item."""
    out = {}
    for ti, t in enumerate(session.turns):
        for ii, item in enumerate(t.items):
            if isinstance(item, Text):
                out[item.body] = (ti, ii)
    return out


@given(sessions_with_images(), st.integers(0, 4))
@settings(max_examples=80)
def test_no_entry_at_or_after_image(drawn, max_turns):
    session, img_ids = drawn
    if not img_ids:
        return
    positions = _text_positions(session)
    for image_id in img_ids:
        img_pos = _position_of(session, image_id)
        window = extract_context(session, image_id, max_turns)
        for _, body in window.entries:
            assert positions[body] < img_pos


@given(sessions_with_images(), st.integers(0, 4))
@settings(max_examples=80)
def test_distinct_contributing_turns_bounded(drawn, max_turns):
    session, img_ids = drawn
    positions = _text_positions(session)
    for image_id in img_ids:
        window = extract_context(session, image_id, max_turns)
        contributing = {positions[body][0] for _, body in window.entries}
        assert len(contributing) <= max_turns
        assert window.turns_used == len(contributing)


@given(sessions_with_images())
@settings(max_examples=80)
def test_smaller_budget_is_suffix_of_larger(drawn):
    session, img_ids = drawn
    for image_id in img_ids:
        windows = [extract_context(session, image_id, k).entries
                   for k in range(5)]
        for small, large in zip(windows, windows[1:]):
            assert large[len(large) - len(small):] == small
