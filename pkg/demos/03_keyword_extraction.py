"""Prompt rendering, reply parsing, and the offline fallback.

The extractor renders a versioned prompt over the context window and
asks a text-generation backend for at most five short grounding
phrases. Replies are split on commas/newlines, cleaned, deduped
case-insensitively, and capped. When the backend is down or answers
garbage, a lexicon matcher scans the window text directly.
"""

from ctxcrop import (ContextWindow, LexiconExtractor, extract_keywords,
                     parse_keywords, render_prompt)
from ctxcrop.backends import FixtureTextGen

window = ContextWindow(
    image_id="demo",
    entries=(
        ("patient", "a mosquito bit my ankle and now it is swollen"),
        ("doctor", "how long ago did that happen?"),
        ("patient", "two days, the swelling is spreading"),
    ),
    turns_used=3,
)

prompt = render_prompt(window)
print("rendered prompt", f"(template {prompt.template_version}):")
print(prompt.body)

# parsing is forgiving about quoting and duplicates, strict about the cap
raw = '"ankle", "Swelling", swelling, mosquito bite, redness, itch, warmth'
print("\nparsed:", list(parse_keywords(raw).keywords))

# a canned backend stands in for a live LLM; rules match on prompt text
backend = FixtureTextGen(rules=[("mosquito", "ankle, swelling, bite")])
keywords = extract_keywords(window, backend)
print("backend keywords:", list(keywords.keywords), "|", keywords.source)

# if the backend replies nothing useful, the lexicon rescues the run
silent = FixtureTextGen(default="")
fallback = LexiconExtractor()  # ships with a body-part/symptom seed list
keywords = extract_keywords(window, silent, fallback=fallback)
print("fallback keywords:", list(keywords.keywords), "|", keywords.source)
