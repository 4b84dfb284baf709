"""Show which conversation text becomes the grounding evidence for each
image in a session.

The window takes the last three turns that actually contain text before
the image's position. Image-only turns are skipped without using up the
budget, and text sent in the same message before the image counts as the
most adjacent context of all.
"""

from ctxcrop import extract_context
from ctxcrop.dialogue import ImageItem, Session, Text, Turn

session = Session(
    session_id="demo-002",
    department="tcm",
    turns=[
        Turn(index=0, role="patient", items=[
            Text(body="I feel tired and my mouth tastes bitter")]),
        Turn(index=1, role="doctor", items=[
            Text(body="please send a clear photo of your tongue")]),
        Turn(index=2, role="patient", items=[
            ImageItem(image_id="tongue-1", uri="tongue-1.png",
                      width=480, height=640)]),
        Turn(index=3, role="doctor", items=[
            Text(body="a bit blurry, one more from closer up please")]),
        Turn(index=4, role="patient", items=[
            Text(body="is this better?"),
            ImageItem(image_id="tongue-2", uri="tongue-2.png",
                      width=480, height=640)]),
    ],
)

for image_id in ("tongue-1", "tongue-2"):
    window = extract_context(session, image_id)
    print(f"\ncontext for {image_id} ({window.turns_used} turns):")
    for role, text in window.entries:
        print(f'  {role}: "{text}"')

# tongue-2's window reaches past the image-only turn 2 without spending
# a slot on it, and includes the same-message text "is this better?"

# an image with nothing before it gets an empty window; the pipeline
# then keeps that image untouched and never calls a backend
first = Session(session_id="demo-003", department="derm", turns=[
    Turn(index=0, role="patient", items=[
        ImageItem(image_id="cold-open", uri="x.png", width=10, height=10)]),
])
print("\ncold-open window empty:",
      not extract_context(first, "cold-open"))
