"""Phoneme lexicon, grapheme-to-phoneme lookup, and the extended vocabulary
that layers phoneme tokens and speech-boundary markers over a word-level
base vocabulary.

The lexicon file format is one entry per line, ``WORD  PH1 PH2 ...``, with
``;;;`` comment lines; variant entries like ``WORD(1)`` collapse onto the
base word, first pronunciation wins.  Phonemes are ARPAbet, vowels carrying
a stress digit (0/1/2).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Iterable

__all__ = [
    "ARPABET_CONSONANTS",
    "ARPABET_VOWELS",
    "ARPABET_INVENTORY",
    "LETTER_FALLBACK",
    "LexiconError",
    "OovWordError",
    "PhonemeLexicon",
    "load_lexicon",
    "load_default_lexicon",
    "g2p",
    "base_tokenize",
    "ExtendedVocabulary",
    "build_vocab",
    "TokenizedPrompt",
    "tokenize_prompt",
    "render_tokens",
]

ARPABET_CONSONANTS = (
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG",
    "P", "R", "S", "SH", "T", "TH", "V", "W", "Y", "Z", "ZH",
)
ARPABET_VOWELS = (
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY",
    "OW", "OY", "UH", "UW",
)
ARPABET_INVENTORY = frozenset(ARPABET_CONSONANTS) | {
    f"{v}{stress}" for v in ARPABET_VOWELS for stress in "012"
}

# naive per-letter phonemes for out-of-vocabulary words; X is the only
# letter that expands to two
LETTER_FALLBACK: dict[str, tuple[str, ...]] = {
    "A": ("AH0",), "B": ("B",), "C": ("K",), "D": ("D",), "E": ("EH1",),
    "F": ("F",), "G": ("G",), "H": ("HH",), "I": ("IH1",), "J": ("JH",),
    "K": ("K",), "L": ("L",), "M": ("M",), "N": ("N",), "O": ("OW1",),
    "P": ("P",), "Q": ("K",), "R": ("R",), "S": ("S",), "T": ("T",),
    "U": ("AH1",), "V": ("V",), "W": ("W",), "X": ("K", "S"), "Y": ("Y",),
    "Z": ("Z",),
}

OOV_POLICIES = ("error", "skip", "letter_fallback")


class LexiconError(ValueError):
    """Malformed lexicon line; the message carries the line number."""


class OovWordError(ValueError):
    """Word missing from the lexicon under the error policy."""

    def __init__(self, word: str):
        super().__init__(f"word not in lexicon: {word!r}")
        self.word = word


@dataclass(frozen=True)
class PhonemeLexicon:
    """Case-insensitive word -> pronunciation map over a fixed inventory."""

    entries: dict[str, tuple[str, ...]]
    phoneme_inventory: frozenset[str] = ARPABET_INVENTORY

    def lookup(self, word: str) -> tuple[str, ...] | None:
        return self.entries.get(word.upper())

    def __contains__(self, word: str) -> bool:
        return word.upper() in self.entries

    def __len__(self) -> int:
        return len(self.entries)


_VARIANT_RE = re.compile(r"^(.+)\((\d+)\)$")


def load_lexicon(source: str | Path | IO[str] | Iterable[str]) -> PhonemeLexicon:
    """Read a lexicon from a path, open file, or iterable of lines."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return _parse_lexicon(fh)
    return _parse_lexicon(source)


def _parse_lexicon(lines: Iterable[str]) -> PhonemeLexicon:
    entries: dict[str, tuple[str, ...]] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith(";;;"):
            continue
        fields = line.split()
        word, phones = fields[0], fields[1:]
        if not phones:
            raise LexiconError(f"line {lineno}: entry {word!r} has no pronunciation")
        m = _VARIANT_RE.match(word)
        if m:
            word = m.group(1)
        word = word.upper()
        for p in phones:
            if p not in ARPABET_INVENTORY:
                raise LexiconError(f"line {lineno}: unknown phoneme {p!r} in {word!r}")
        if word not in entries:  # duplicates keep the first pronunciation
            entries[word] = tuple(phones)
    return PhonemeLexicon(entries=entries)


def load_default_lexicon() -> PhonemeLexicon:
    """The lexicon shipped with the package."""
    path = resources.files("soundscene").joinpath("data/lexicon.dict")
    with path.open("r", encoding="utf-8") as fh:
        return _parse_lexicon(fh)


_WORD_EDGE_RE = re.compile(r"^[^A-Za-z0-9]+|[^A-Za-z0-9]+$")


def g2p(text: str, lex: PhonemeLexicon, oov_policy: str = "error") -> list[str]:
    """Phoneme sequence for whitespace-separated words.

    Leading/trailing non-alphanumerics are stripped per word (internal
    apostrophes survive); words that strip to nothing are skipped.  The
    result is concatenative: g2p(a + " " + b) == g2p(a) + g2p(b).
    """
    if oov_policy not in OOV_POLICIES:
        raise ValueError(f"unknown oov_policy {oov_policy!r}, want one of {OOV_POLICIES}")
    phones: list[str] = []
    for raw_word in text.split():
        word = _WORD_EDGE_RE.sub("", raw_word)
        if not word:
            continue
        pron = lex.lookup(word)
        if pron is not None:
            phones.extend(pron)
        elif oov_policy == "error":
            raise OovWordError(word)
        elif oov_policy == "skip":
            continue
        else:  # letter_fallback; non-letters (digits, apostrophes) drop out
            for ch in word.upper():
                phones.extend(LETTER_FALLBACK.get(ch, ()))
    return phones


# base tokenizer: lowercased word runs (apostrophes included) or single
# non-space symbols; lowercasing keeps base tokens disjoint from the
# uppercase phoneme tokens
_BASE_TOKEN_RE = re.compile(r"[A-Za-z0-9']+|[^\sA-Za-z0-9']")


def base_tokenize(text: str) -> list[str]:
    return [m.group().lower() for m in _BASE_TOKEN_RE.finditer(text)]


def _base_tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    return [(m.group().lower(), m.start(), m.end()) for m in _BASE_TOKEN_RE.finditer(text)]


@dataclass(frozen=True)
class ExtendedVocabulary:
    """Base word tokens, then every inventory phoneme, then the two
    speech-boundary markers.  Ids are dense and assigned in that order."""

    base_tokens: tuple[str, ...]
    phoneme_tokens: tuple[str, ...]
    boundary_open: str = "<SPK>"
    boundary_close: str = "</SPK>"
    _ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ordered = self.all_tokens()
        ids: dict[str, int] = {}
        for i, tok in enumerate(ordered):
            if tok in ids:
                raise ValueError(f"duplicate token across vocabulary segments: {tok!r}")
            ids[tok] = i
        object.__setattr__(self, "_ids", ids)

    def all_tokens(self) -> tuple[str, ...]:
        return (
            tuple(self.base_tokens)
            + tuple(self.phoneme_tokens)
            + (self.boundary_open, self.boundary_close)
        )

    def __len__(self) -> int:
        return len(self.base_tokens) + len(self.phoneme_tokens) + 2

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_of(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise ValueError(f"token not in vocabulary: {token!r}") from None

    def token_of(self, idx: int) -> str:
        tokens = self.all_tokens()
        if not 0 <= idx < len(tokens):
            raise ValueError(f"token id {idx} out of range 0..{len(tokens) - 1}")
        return tokens[idx]

    def write_tsv(self, dest: str | Path | IO[str]) -> None:
        """Two columns: token, tab, id."""
        if isinstance(dest, (str, Path)):
            with open(dest, "w", encoding="utf-8") as fh:
                self.write_tsv(fh)
            return
        for i, tok in enumerate(self.all_tokens()):
            dest.write(f"{tok}\t{i}\n")

    @classmethod
    def read_tsv(cls, source: str | Path | IO[str]) -> "ExtendedVocabulary":
        """Rebuild from write_tsv output.

        The last two rows are the boundary markers; the contiguous run of
        inventory phonemes before them is the phoneme segment (base tokens
        are lowercased and can never collide with it).
        """
        if isinstance(source, (str, Path)):
            with open(source, "r", encoding="utf-8") as fh:
                return cls.read_tsv(fh)
        rows: list[str] = []
        for lineno, line in enumerate(source, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[1].isdigit():
                raise ValueError(f"line {lineno}: expected 'token<TAB>id'")
            if int(parts[1]) != len(rows):
                raise ValueError(f"line {lineno}: ids must be dense and ascending")
            rows.append(parts[0])
        if len(rows) < 2:
            raise ValueError("vocabulary file missing boundary tokens")
        boundary_open, boundary_close = rows[-2], rows[-1]
        body = rows[:-2]
        split = len(body)
        while split > 0 and body[split - 1] in ARPABET_INVENTORY:
            split -= 1
        return cls(
            base_tokens=tuple(body[:split]),
            phoneme_tokens=tuple(body[split:]),
            boundary_open=boundary_open,
            boundary_close=boundary_close,
        )


def build_vocab(
    corpus: str | IO[str] | Iterable[str], lex: PhonemeLexicon
) -> ExtendedVocabulary:
    """Base tokens ordered by corpus frequency (ties lexicographic), then
    the lexicon's full phoneme inventory, then the boundary pair."""
    if isinstance(corpus, str):
        lines: Iterable[str] = corpus.splitlines()
    else:
        lines = corpus
    counts: Counter[str] = Counter()
    for line in lines:
        counts.update(base_tokenize(line))
    base = tuple(tok for tok, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))
    return ExtendedVocabulary(
        base_tokens=base,
        phoneme_tokens=tuple(sorted(lex.phoneme_inventory)),
    )


@dataclass(frozen=True)
class TokenizedPrompt:
    """Token ids over the canonical serialization of a prompt.

    spans_meta holds one (start, end) byte range into ``source`` per token;
    speech-side tokens (boundaries, phonemes) carry zero-width ranges, so
    concatenating every slice reproduces the source with the quoted speech
    segments removed.
    """

    source: str
    ids: tuple[int, ...]
    spans_meta: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.ids) != len(self.spans_meta):
            raise ValueError("ids and spans_meta must have equal length")


def tokenize_prompt(
    p,
    vocab: ExtendedVocabulary,
    lex: PhonemeLexicon,
    oov_policy: str = "error",
) -> TokenizedPrompt:
    """Tokenize the canonical form of a prompt.

    Base text (caption, descriptions, structural characters, span digits)
    goes through the base tokenizer; each quoted speech segment becomes
    boundary-open, its g2p phoneme tokens, boundary-close.
    """
    from soundscene.dsl import _serialize_with_speech_regions

    source, regions = _serialize_with_speech_regions(p)
    open_id = vocab.id_of(vocab.boundary_open)
    close_id = vocab.id_of(vocab.boundary_close)

    ids: list[int] = []
    meta: list[tuple[int, int]] = []
    pos = 0
    for r_start, r_end, speech in regions + [(len(source), len(source), None)]:
        segment = source[pos:r_start]
        toks = _base_tokenize_with_spans(segment)
        for k, (tok, t_start, _) in enumerate(toks):
            tile_start = pos if k == 0 else pos + t_start
            tile_end = pos + toks[k + 1][1] if k + 1 < len(toks) else r_start
            ids.append(vocab.id_of(tok))
            meta.append((tile_start, tile_end))
        if speech is not None:
            ids.append(open_id)
            meta.append((r_start, r_start))
            for ph in g2p(speech, lex, oov_policy):
                ids.append(vocab.id_of(ph))
                meta.append((r_start, r_start))
            ids.append(close_id)
            meta.append((r_end, r_end))
        pos = r_end

    return TokenizedPrompt(source=source, ids=tuple(ids), spans_meta=tuple(meta))


def render_tokens(tp: TokenizedPrompt, vocab: ExtendedVocabulary) -> str:
    """Re-render a tokenized prompt: base tokens back out of the source by
    their ranges, speech segments as space-joined marker/phoneme tokens."""
    parts: list[str] = []
    marker_group: list[str] = []
    for idx, (s, e) in zip(tp.ids, tp.spans_meta):
        if s == e:
            marker_group.append(vocab.token_of(idx))
            continue
        if marker_group:
            parts.append(" ".join(marker_group))
            marker_group = []
        parts.append(tp.source[s:e])
    if marker_group:
        parts.append(" ".join(marker_group))
    return "".join(parts)
