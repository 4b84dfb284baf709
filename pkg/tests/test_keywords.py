"""Prompt rendering, reply parsing, and the extraction flow with fallback."""

from hypothesis import given, settings
from hypothesis import strategies as st

from ctxcrop.backends import BackendError, FixtureTextGen
from ctxcrop.context import ContextWindow
from ctxcrop.keywords import (LexiconExtractor, extract_keywords,
                              parse_keywords, render_prompt)


def window(*entries, image_id="img1"):
    return ContextWindow(image_id=image_id,
                         entries=tuple(("patient", e) if isinstance(e, str)
                                       else e for e in entries),
                         turns_used=len(entries))


class FailingBackend:
    def __init__(self):
        self.calls = 0

    def complete(self, prompt):
        self.calls += 1
        raise BackendError("connection refused")


class TestRenderPrompt:
    def test_window_sentence_appears_verbatim(self):
        sentence = "a mosquito bit my ankle and now it is swollen"
        prompt = render_prompt(window(sentence))
        assert sentence in prompt.body

    def test_empty_window_keeps_instruction(self):
        prompt = render_prompt(window())
        assert "5" in prompt.body
        assert "keyword" in prompt.body.lower()
        assert "English" in prompt.body

    def test_entries_oldest_first(self):
        prompt = render_prompt(window("first", "second", "third"))
        assert (prompt.body.index("first")
                < prompt.body.index("second")
                < prompt.body.index("third"))

    def test_max_keywords_substituted(self):
        prompt = render_prompt(window("x"), max_keywords=3)
        assert "3" in prompt.body
        assert "{{max_keywords}}" not in prompt.body

    def test_roles_shown(self):
        prompt = render_prompt(window(("doctor", "any discharge?")))
        assert 'doctor: "any discharge?"' in prompt.body


class TestParseKeywords:
    def test_five_quoted_terms(self):
        raw = '"Diabetes", "feet", "dry skin", "heels", "left side"'
        kws = parse_keywords(raw)
        assert list(kws.keywords) == [
            "Diabetes", "feet", "dry skin", "heels", "left side"]

    def test_seven_terms_truncated_to_five(self):
        raw = "one, two, three, four, five, six, seven"
        kws = parse_keywords(raw)
        assert list(kws.keywords) == ["one", "two", "three", "four", "five"]

    def test_case_insensitive_dedupe_keeps_first(self):
        assert list(parse_keywords("Legs, legs, LEGS").keywords) == ["Legs"]

    def test_newline_separated(self):
        assert list(parse_keywords("arm\nrash\n").keywords) == ["arm", "rash"]

    def test_fullwidth_commas(self):
        assert list(parse_keywords("舌头，胃").keywords) == ["舌头", "胃"]

    def test_garbage_gives_empty(self):
        assert not parse_keywords("   , ,\n ,")
        assert not parse_keywords("")

    def test_strips_assorted_quotes(self):
        raw = "“red patch” , 'thigh', `itch`"
        assert list(parse_keywords(raw).keywords) == [
            "red patch", "thigh", "itch"]


@given(st.text(max_size=200), st.integers(1, 5))
@settings(max_examples=150)
def test_parse_respects_cap_and_is_idempotent(raw, cap):
    kws = parse_keywords(raw, cap)
    assert len(kws) <= cap
    again = parse_keywords(", ".join(kws.keywords), cap)
    assert again.keywords == kws.keywords
    for word in kws.keywords:
        assert word == word.strip()
        assert not any(q in (word[0], word[-1]) for q in "\"'“”‘’`")


class TestLexiconFallback:
    def test_single_term_match(self):
        lex = LexiconExtractor(["tongue"])
        kws = lex.extract(window("please send a photo of your tongue"))
        assert list(kws.keywords) == ["tongue"]
        assert kws.source == "fallback"

    def test_most_recent_mention_first(self):
        lex = LexiconExtractor(["ankle", "rash"])
        kws = lex.extract(window("the rash spread", "now my ankle hurts"))
        assert list(kws.keywords) == ["ankle", "rash"]

    def test_longest_match_suppresses_substring(self):
        lex = LexiconExtractor(["tongue edges", "tongue"])
        kws = lex.extract(window("look at the tongue edges"))
        assert list(kws.keywords) == ["tongue edges"]

    def test_word_boundaries(self):
        lex = LexiconExtractor(["leg"])
        assert not lex.extract(window("allegedly fine"))

    def test_matched_text_taken_from_window(self):
        lex = LexiconExtractor(["tongue"])
        kws = lex.extract(window("my Tongue hurts"))
        assert list(kws.keywords) == ["Tongue"]


class TestExtractKeywords:
    def test_backend_reply_parsed(self):
        backend = FixtureTextGen(default="leg, swelling, bite")
        kws = extract_keywords(window("a mosquito bit me"), backend)
        assert list(kws.keywords) == ["leg", "swelling", "bite"]
        assert kws.source == "backend"
        assert backend.calls == 1

    def test_empty_window_never_calls_backend(self):
        backend = FixtureTextGen(default="anything")
        kws = extract_keywords(window(), backend)
        assert not kws
        assert backend.calls == 0

    def test_backend_down_falls_back_to_lexicon(self):
        backend = FailingBackend()
        lex = LexiconExtractor(["tongue"])
        kws = extract_keywords(window("my tongue is sore"), backend,
                               fallback=lex)
        assert list(kws.keywords) == ["tongue"]
        assert kws.source == "fallback"
        assert backend.calls == 1

    def test_backend_down_without_fallback_gives_empty(self):
        kws = extract_keywords(window("some text"), FailingBackend())
        assert not kws
        assert kws.source == "fallback"

    def test_unparseable_reply_falls_back(self):
        backend = FixtureTextGen(default="   ,, \n")
        lex = LexiconExtractor(["rash"])
        kws = extract_keywords(window("a rash appeared"), backend,
                               fallback=lex)
        assert list(kws.keywords) == ["rash"]
        assert kws.source == "fallback"

    def test_substring_rules_select_reply(self):
        backend = FixtureTextGen(rules=[("mosquito", "leg, bite"),
                                        ("tongue", "tongue")])
        kws = extract_keywords(window("a mosquito bit me"), backend)
        assert list(kws.keywords) == ["leg", "bite"]

    def test_keywords_come_from_reply_or_window(self):
        backend = FixtureTextGen(default="elbow, Rash")
        w = window("the rash is on my elbow")
        kws = extract_keywords(w, backend)
        reply_words = {"elbow", "rash"}
        assert {k.lower() for k in kws.keywords} <= reply_words
