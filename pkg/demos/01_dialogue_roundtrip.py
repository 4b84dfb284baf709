"""Build a small multi-turn dialogue dataset, serialize it to the
line-delimited format, and parse it back.

The record shape is one session per line: session_id, department, and a
list of turns, each turn holding text and image items in send order.
Unknown fields survive the round trip, so annotation tools can stash
their own metadata in the stream.
"""

from ctxcrop import (Dataset, ImageItem, Session, Text, Turn, box_area,
                     parse_dataset, serialize_dataset)
from ctxcrop.dialogue import Box

session = Session(
    session_id="demo-001",
    department="dermatology",
    turns=[
        Turn(index=0, role="patient", items=[
            Text(body="there is an itchy patch on my forearm")]),
        Turn(index=1, role="doctor", items=[
            Text(body="please send a photo of it")]),
        Turn(index=2, role="patient", items=[
            Text(body="here you go"),
            ImageItem(image_id="demo-img-1", uri="demo-img-1.png",
                      width=640, height=480),
        ]),
    ],
)
dataset = Dataset(sessions=[session])

payload = serialize_dataset(dataset)
print("serialized record:")
print(payload)

parsed = parse_dataset(payload.splitlines())
print("round trip preserved everything:", parsed == dataset)

# serialization is deterministic, byte for byte
print("deterministic:", serialize_dataset(parsed) == payload)

# the shared pixel geometry: half-open boxes, origin top-left
box = Box(100, 80, 400, 360)
print(f"box {box} covers {box_area(box)} px "
      f"({box.width} x {box.height})")
