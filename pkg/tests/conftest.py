"""Shared test fixtures: session builders and synthetic images."""

import io
from pathlib import Path

import pytest
from PIL import Image

from ctxcrop.dialogue import Dataset, ImageItem, Session, Text, Turn

FIXTURES = Path(__file__).parent / "fixtures"


def turn(index, role, *items):
    return Turn(index=index, role=role, items=list(items))


def text(body):
    return Text(body=body)


def image(image_id, uri=None, width=100, height=100):
    return ImageItem(image_id=image_id, uri=uri or f"{image_id}.png",
                     width=width, height=height)


def session(session_id, *turns, department="dermatology"):
    return Session(session_id=session_id, department=department,
                   turns=list(turns))


def make_png(width, height, color=(120, 40, 40), roi=None,
             roi_color=(240, 220, 60)):
    """Solid-color PNG with an optional contrasting RoI rectangle."""
    img = Image.new("RGB", (width, height), color)
    if roi is not None:
        x0, y0, x1, y1 = roi
        block = Image.new("RGB", (x1 - x0, y1 - y0), roi_color)
        img.paste(block, (x0, y0))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture
def sample_session():
    """Patient/doctor exchange with one image mid-conversation."""
    return session(
        "s1",
        turn(0, "patient", text("a mosquito bit my ankle and now it is swollen")),
        turn(1, "doctor", text("since when?")),
        turn(2, "patient", text("two days ago")),
        turn(3, "patient", text("photo attached"), image("img1")),
    )


@pytest.fixture
def sample_dataset(sample_session):
    return Dataset(sessions=[sample_session])
