"""Prompt DSL: parsing, canonical serialization, validation, assembly."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import PLANNED_PROMPT_SAMPLES, random_prompt
from soundscene.dsl import (
    EventAnnotation,
    EventSpec,
    PromptSyntaxError,
    StructuredPrompt,
    TimeSpan,
    from_annotations,
    parse,
    serialize,
    validate,
)


def span(a, b):
    return TimeSpan(a, b)


class TestTimeSpan:
    def test_quantizes_to_centiseconds(self):
        s = TimeSpan(1.234, 2.009)
        assert s.start == 1.23
        assert s.end == 2.01

    def test_negative_zero_normalized(self):
        s = TimeSpan(-0.001, 1.0)
        assert str(s.start) == "0.0"

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            TimeSpan(float("nan"), 1.0)
        with pytest.raises(ValueError):
            TimeSpan(0.0, float("inf"))


class TestParse:
    def test_caption_and_multi_span_event(self):
        p = parse("Rain falls. @{dog barking & <1.25,3.50> <7.00,8.20>}")
        assert p.caption == "Rain falls."
        assert len(p.events) == 1
        e = p.events[0]
        assert e.description == "dog barking"
        assert e.spans == (span(1.25, 3.50), span(7.00, 8.20))
        assert e.speech is None

    def test_quoted_speech(self):
        p = parse('@{Man speaking & <2.00,7.50> "Mama Mama snow mama come over here, baby"}')
        assert p.caption == ""
        assert p.events[0].speech == "Mama Mama snow mama come over here, baby"

    def test_caption_only(self):
        p = parse("Quiet rain on a tin roof.")
        assert p.caption == "Quiet rain on a tin roof."
        assert p.events == ()

    def test_empty_input(self):
        assert parse("") == StructuredPrompt(caption="", events=())

    def test_flexible_whitespace(self):
        for text in (
            "A. @{x & <0.00, 10.00>}@{y & <1.50, 6.00>}",
            "A.   @{ x &   < 0 , 10 > }  @{y&<1.5,6>}",
        ):
            p = parse(text)
            assert p.caption == "A."
            assert [e.description for e in p.events] == ["x", "y"]
            assert p.events[0].spans == (span(0, 10),)
            assert p.events[1].spans == (span(1.5, 6),)

    def test_escaped_quotes_and_backslashes(self):
        p = parse('@{a & <1,2> "say \\"hi\\" with a \\\\ slash"}')
        assert p.events[0].speech == 'say "hi" with a \\ slash'

    def test_spans_come_back_sorted(self):
        p = parse("@{a & <5.00,6.00> <1.00,2.00>}")
        assert p.events[0].spans == (span(1, 2), span(5, 6))

    def test_fraction_digit_counts(self):
        p = parse("@{a & <1,2.5> <3.25,4>}")
        assert p.events[0].spans == (span(1.0, 2.5), span(3.25, 4.0))

    @pytest.mark.parametrize(
        "text",
        [
            "@{a <1,2>}",  # missing '&'
            "@{ & <1,2>}",  # empty description
            "@{a & }",  # no spans
            "@{a & <1,2>",  # unterminated block
            "@{a & <4.00,4.00>}",  # start == end
            "@{a & <5,2>}",  # start > end
            "@{a & <1.234,2>}",  # too many fraction digits
            "@{a & <.5,2>}",  # no integer part
            "@{a & <-1,2>}",  # sign not in grammar
            '@{a & <1,2> "unterminated}',
            '@{a & <1,2> "bad \\x escape"}',
            "@{a & <1,2>} trailing",
            '@{a"b & <1,2>}',  # quote in description
            "@{a@{b & <1,2>}",  # opener in description
            "@{a & <1,2>} @",  # garbage after block
        ],
    )
    def test_syntax_errors(self, text):
        with pytest.raises(PromptSyntaxError):
            parse(text)

    def test_error_carries_byte_offset(self):
        with pytest.raises(PromptSyntaxError) as exc:
            parse("abc @{x <1,2>}")
        # description scan hits the closing '}' (char 13) before any '&'
        assert exc.value.offset == 13
        assert "at byte 13" in str(exc.value)

    def test_byte_offset_counts_utf8_bytes(self):
        with pytest.raises(PromptSyntaxError) as exc:
            parse("caf\u00e9 @{x <1,2>}")
        # same shape as above but the e-acute is two UTF-8 bytes: 14 chars in,
        # 15 bytes in
        assert exc.value.offset == 15


class TestSerialize:
    def test_canonical_form(self):
        p = parse("A.   @{x   &   <1 , 2>}@{y & <3,4> \"hi\"}")
        assert serialize(p) == 'A. @{x & <1.00,2.00>} @{y & <3.00,4.00> "hi"}'

    def test_sorts_spans(self):
        e = EventSpec("x", (span(5, 6), span(1, 2)))
        assert serialize(StructuredPrompt("", (e,))) == "@{x & <1.00,2.00> <5.00,6.00>}"

    def test_escapes_speech(self):
        e = EventSpec("x", (span(1, 2),), speech='say "hi" \\ now')
        assert serialize(StructuredPrompt("", (e,))) == '@{x & <1.00,2.00> "say \\"hi\\" \\\\ now"}'

    def test_caption_only(self):
        assert serialize(StructuredPrompt("Just rain.", ())) == "Just rain."

    def test_empty_prompt(self):
        assert serialize(StructuredPrompt("", ())) == ""

    @pytest.mark.parametrize(
        "prompt",
        [
            StructuredPrompt("", (EventSpec("x", ()),)),
            StructuredPrompt("", (EventSpec("   ", (span(1, 2),)),)),
            StructuredPrompt("", (EventSpec("a&b", (span(1, 2),)),)),
            StructuredPrompt("", (EventSpec("a@{b", (span(1, 2),)),)),
            StructuredPrompt("", (EventSpec('a"b', (span(1, 2),)),)),
            StructuredPrompt("bad @{ caption", ()),
            StructuredPrompt("", (EventSpec("x", (span(4, 4),)),)),
            StructuredPrompt("", (EventSpec("x", (span(-1, 2),)),)),
        ],
    )
    def test_rejects_invariant_violations(self, prompt):
        with pytest.raises(ValueError):
            serialize(prompt)


class TestSamplePrompts:
    @pytest.mark.parametrize("raw", PLANNED_PROMPT_SAMPLES)
    def test_round_trip_after_canonicalization(self, raw):
        p = parse(raw)
        assert validate(p) == []
        canonical = serialize(p)
        assert parse(canonical) == p
        assert serialize(parse(canonical)) == canonical

    def test_first_sample_structure(self):
        p = parse(PLANNED_PROMPT_SAMPLES[0])
        assert p.caption == "She is talking in the park."
        assert [e.description for e in p.events] == [
            "park ambient sounds.",
            "Female speech, woman speaking.",
        ]
        assert p.events[0].spans == (span(0, 10),)
        assert p.events[1].speech == "Good morning! How are you feeling today?"


class TestValidate:
    def test_valid_prompt(self):
        p = StructuredPrompt("", (EventSpec("x", (span(3, 5),)),))
        assert validate(p, 10.0) == []

    def test_degenerate_span(self):
        p = StructuredPrompt("", (EventSpec("x", (span(4, 4),)),))
        assert [v.code for v in validate(p)] == ["degenerate-span"]

    def test_end_exceeds_clip(self):
        p = StructuredPrompt("", (EventSpec("x", (span(9.5, 10.5),)),))
        assert [v.code for v in validate(p, 10.0)] == ["end-exceeds-clip"]

    def test_negative_start_and_empty_description(self):
        p = StructuredPrompt(
            "", (EventSpec("", (span(-1, 2),)), EventSpec("y", (span(1, 2),)))
        )
        codes = {v.code for v in validate(p)}
        assert codes == {"empty-description", "negative-start"}

    def test_overlap_is_warning_not_error(self):
        p = StructuredPrompt("", (EventSpec("x", (span(1, 5), span(4, 6))),))
        findings = validate(p)
        assert [v.code for v in findings] == ["overlapping-spans"]
        assert findings[0].severity == "warning"
        # touching spans do not overlap
        q = StructuredPrompt("", (EventSpec("x", (span(1, 4), span(4, 6))),))
        assert validate(q) == []

    def test_reports_every_violation(self):
        p = StructuredPrompt(
            "",
            (
                EventSpec("", (span(4, 4), span(9, 12))),
                EventSpec("y", (span(2, 3),)),
            ),
        )
        codes = sorted(v.code for v in validate(p, 10.0))
        assert codes == ["degenerate-span", "empty-description", "end-exceeds-clip"]


class TestFromAnnotations:
    def test_merges_same_label_without_transcripts(self):
        anns = [
            EventAnnotation("dog barking", span(6, 7)),
            EventAnnotation("dog barking", span(1, 2)),
        ]
        p = from_annotations("Dogs.", anns)
        assert len(p.events) == 1
        assert p.events[0].spans == (span(1, 2), span(6, 7))
        assert p.events[0].speech is None

    def test_keeps_separate_on_differing_transcripts(self):
        anns = [
            EventAnnotation("Man speaking", span(1, 4.5), "I brought the rope."),
            EventAnnotation("Man speaking", span(5, 6.5), "Still fishing."),
        ]
        p = from_annotations("", anns)
        assert len(p.events) == 2
        assert p.events[0].speech == "I brought the rope."
        assert p.events[1].speech == "Still fishing."

    def test_merges_shared_transcript(self):
        anns = [
            EventAnnotation("Man speaking", span(1, 2), "Hello."),
            EventAnnotation("Man speaking", span(5, 6), "Hello."),
        ]
        p = from_annotations("", anns)
        assert len(p.events) == 1
        assert p.events[0].speech == "Hello."
        assert p.events[0].spans == (span(1, 2), span(5, 6))

    def test_empty_transcript_means_no_speech(self):
        anns = [EventAnnotation("Speech", span(1, 2), "")]
        p = from_annotations("", anns)
        assert p.events[0].speech is None

    def test_first_occurrence_order(self):
        anns = [
            EventAnnotation("b", span(3, 4)),
            EventAnnotation("a", span(1, 2)),
            EventAnnotation("b", span(7, 8)),
        ]
        p = from_annotations("", anns)
        assert [e.description for e in p.events] == ["b", "a"]

    @pytest.mark.parametrize(
        "ann",
        [
            EventAnnotation("x", span(4, 4)),
            EventAnnotation("x", span(9, 11)),
            EventAnnotation("x", span(-1, 2)),
            EventAnnotation(" ", span(1, 2)),
        ],
    )
    def test_rejects_invalid_annotations(self, ann):
        with pytest.raises(ValueError):
            from_annotations("", [ann])

    def test_result_serializes_and_validates(self):
        anns = [
            EventAnnotation("Woman speaking", span(1.5, 6), "Good morning."),
            EventAnnotation("rain", span(0, 10)),
        ]
        p = from_annotations("A woman talks in the rain.", anns)
        assert validate(p) == []
        assert parse(serialize(p)) == p


# hypothesis strategies for canonical prompts

_DESC_ALPHABET = (
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ',.!?-:;()<"
)
_SPEECH_ALPHABET = _DESC_ALPHABET + '"\\&}{\n'

_descriptions = (
    st.text(alphabet=_DESC_ALPHABET, min_size=1, max_size=30)
    .map(str.strip)
    .filter(bool)
)
_centiseconds = st.integers(min_value=0, max_value=1000)
_spans = st.tuples(_centiseconds, _centiseconds).filter(lambda ab: ab[0] != ab[1]).map(
    lambda ab: TimeSpan(min(ab) / 100.0, max(ab) / 100.0)
)
_events = st.builds(
    lambda desc, spans, speech: EventSpec(
        description=desc,
        spans=tuple(sorted(spans, key=lambda s: (s.start, s.end))),
        speech=speech,
    ),
    _descriptions,
    st.lists(_spans, min_size=1, max_size=3),
    st.one_of(st.none(), st.text(alphabet=_SPEECH_ALPHABET, max_size=30)),
)
_prompts = st.builds(
    lambda caption, events: StructuredPrompt(caption=caption, events=tuple(events)),
    st.text(alphabet=_DESC_ALPHABET, max_size=40).map(str.strip),
    st.lists(_events, max_size=4),
)


class TestProperties:
    @given(_prompts)
    def test_round_trip_identity(self, p):
        assert parse(serialize(p)) == p

    @given(_prompts)
    def test_canonicalization_idempotent(self, p):
        once = serialize(p)
        assert serialize(parse(once)) == once

    @given(st.text(max_size=200))
    @settings(max_examples=300)
    def test_parse_total_over_arbitrary_text(self, text):
        try:
            parse(text)
        except PromptSyntaxError:
            pass  # the only error parse may raise

    @given(
        st.lists(
            st.builds(
                EventSpec,
                _descriptions,
                st.lists(_spans, min_size=1, max_size=3).map(tuple),
            ),
            max_size=3,
        )
    )
    def test_validate_iff_in_range(self, events):
        p = StructuredPrompt("", tuple(events))
        clip = 5.0
        errors = [v for v in validate(p, clip) if v.severity == "error"]
        in_range = all(
            0 <= s.start < s.end <= clip for e in p.events for s in e.spans
        )
        assert (errors == []) == in_range

    def test_seeded_generator_round_trips(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            p = random_prompt(rng)
            assert parse(serialize(p)) == p
