"""Shared test data and generators for valid prompts."""

from __future__ import annotations

import numpy as np

from soundscene.dsl import EventSpec, StructuredPrompt, TimeSpan

# Sample planner outputs: caption plus timed event blocks, some with quoted
# speech. Used for parser fixtures and as recorded planner responses.
PLANNED_PROMPT_SAMPLES = [
    'She is talking in the park. @{park ambient sounds. & <0.00, 10.00>}@{Female speech, '
    'woman speaking. & <1.50, 6.00> "Good morning! How are you feeling today?"}',
    'A child yelling as a young boy talks during several slaps on a hard surface. '
    '@{Young boy speaking & <1.50,8.00> "Say yeah, baby. Say yeah, baby. Are you over '
    'tired?"} @{Child yelling & <2.00,6.00>} @{slaps on a hard surface & <2.50,3.00> '
    '<5.00,5.50>}',
    'A female speaking with some rustling followed by another female speaking. '
    '@{Female speech, woman speaking & <0.50,6.00> "The IT services at the King\'s '
    'University College are proud to announce that"} @{rustling & <1.00,5.00>} '
    '@{Female speech, woman speaking & <6.50,8.00> "we have launched"}',
    'A duck quacks followed by a man talking while birds chirp in the distance. '
    '@{duck quack & <0.50,1.50>} @{Man speaking & <2.00,7.50> "Mama Mama snow mama come '
    'over here, baby"} @{birds chirping in the distance & <2.50,4.00> <5.50,7.00>}',
    'Two men speaking with loud insects buzzing. @{Man speaking & <1.00,4.50> "I\'ve got '
    'gloves covered in mid repellent."} @{Man speaking & <5.00,6.50> "Still fishing."} '
    '@{loud insects buzzing & <0.00,10.00>}',
    'A man speaking as a stream of water splashes and flows while music faintly plays in '
    'the distance. @{Man speaking & <0.50,9.50> "in the amateur show tonight then tomorrow '
    'on Saturday the broadcasters and the other amateur cast will be going out hope to do '
    'well there get some good footage hope you enjoy"} @{water splashing and flowing & '
    '<0.00,10.00>} @{faint music in the distance & <0.00,10.00>}',
    'People are giggling, and a man speaks. @{people giggling & <1.00,5.00>} '
    '@{Man speaking & <2.50,4.50> "What\'s so funny?"}',
    'A person is giving instructions or explaining a procedure. @{Man speaking & '
    '<1.00,9.00> "Some people talk about fucking the heads, but the way I do it, I just '
    'put my finger down there and pull it out."}',
]

_DESC_CHARS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ',.!?-:;()<"
_SPEECH_CHARS = _DESC_CHARS + '"\\&}{\n'


def _random_field(rng: np.random.Generator, chars: str, min_size: int, max_size: int) -> str:
    n = int(rng.integers(min_size, max_size + 1))
    return "".join(chars[int(i)] for i in rng.integers(0, len(chars), size=n))


def random_time_span(rng: np.random.Generator, clip_cs: int = 1000) -> TimeSpan:
    a, b = sorted(rng.choice(clip_cs + 1, size=2, replace=False).tolist())
    return TimeSpan(a / 100.0, b / 100.0)


def random_prompt(rng: np.random.Generator, max_events: int = 4) -> StructuredPrompt:
    """A canonical-form prompt: stripped fields, sorted spans.

    parse(serialize(p)) == p holds for everything this returns.
    """
    caption = ""
    if rng.random() < 0.8:
        caption = _random_field(rng, _DESC_CHARS, 1, 40).strip()
    events = []
    for _ in range(int(rng.integers(0, max_events + 1))):
        desc = ""
        while not desc:
            desc = _random_field(rng, _DESC_CHARS, 1, 30).strip()
        spans = sorted(
            (random_time_span(rng) for _ in range(int(rng.integers(1, 4)))),
            key=lambda s: (s.start, s.end),
        )
        speech = None
        if rng.random() < 0.5:
            speech = _random_field(rng, _SPEECH_CHARS, 0, 30)
        events.append(EventSpec(description=desc, spans=tuple(spans), speech=speech))
    return StructuredPrompt(caption=caption, events=tuple(events))
