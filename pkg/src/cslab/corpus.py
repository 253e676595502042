"""Tagged multilingual text: tokens, utterances, corpora, and switch statistics."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping

from .errors import LabError


class UnknownLanguageError(LabError):
    pass


class CorpusFormatError(LabError):
    """Malformed corpus or observation file; messages carry path and line number."""


class DuplicateUtteranceError(CorpusFormatError):
    pass


class LanguageTag(enum.Enum):
    """The five supported languages. E is English; the other four are Bantu."""

    E = "E"  # English
    Z = "Z"  # isiZulu
    X = "X"  # isiXhosa
    S = "S"  # Sesotho
    T = "T"  # Setswana

    @property
    def is_bantu(self) -> bool:
        return self is not LanguageTag.E

    @classmethod
    def parse(cls, code: str) -> "LanguageTag":
        try:
            return cls(code)
        except ValueError:
            raise UnknownLanguageError(f"unknown language tag {code!r}") from None


LANGUAGES: tuple[LanguageTag, ...] = tuple(LanguageTag)
BANTU: tuple[LanguageTag, ...] = tuple(t for t in LanguageTag if t.is_bantu)

# Batch names with fixed roles in the pipeline; scenario files may add others.
MANT = "ManT"
B1 = "B1"
B2 = "B2"
B3 = "B3"


class Status(enum.Enum):
    MANUAL = "manual"
    AUTO = "auto"
    UNTRANSCRIBED = "untranscribed"


@dataclass(frozen=True, slots=True)
class TaggedToken:
    """A single word surface with its language tag."""

    surface: str
    lang: LanguageTag

    def __post_init__(self) -> None:
        if not self.surface or any(ch.isspace() for ch in self.surface):
            raise ValueError(
                f"token surface must be non-empty and whitespace-free: {self.surface!r}"
            )

    def __str__(self) -> str:
        return f"{self.surface}_{self.lang.value}"


@dataclass(frozen=True, slots=True)
class Utterance:
    """One segment: metadata plus an ordered token sequence.

    An empty token sequence and UNTRANSCRIBED status imply each other, and
    automatic transcriptions must name the system that produced them.
    """

    id: str
    speaker: str
    batch: str
    duration: float
    tokens: tuple[TaggedToken, ...]
    status: Status = Status.MANUAL
    provenance: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "duration", float(self.duration))
        if self.duration < 0:
            raise ValueError(f"{self.id}: negative duration {self.duration}")
        if (self.status is Status.UNTRANSCRIBED) != (len(self.tokens) == 0):
            raise ValueError(
                f"{self.id}: an utterance is untranscribed exactly when it has no tokens"
            )
        if self.status is Status.AUTO and not self.provenance:
            raise ValueError(f"{self.id}: automatic transcription requires provenance")
        if self.status is not Status.AUTO and self.provenance:
            raise ValueError(f"{self.id}: provenance is only valid for automatic transcriptions")

    @property
    def transcribed(self) -> bool:
        return self.status is not Status.UNTRANSCRIBED

    @property
    def languages(self) -> frozenset[LanguageTag]:
        return frozenset(t.lang for t in self.tokens)

    @property
    def monolingual(self) -> bool:
        return len(self.languages) == 1

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


class Corpus:
    """Ordered, immutable collection of utterances with unique ids."""

    def __init__(self, utterances: Iterable[Utterance]):
        self.utterances: tuple[Utterance, ...] = tuple(utterances)
        self._by_id: dict[str, Utterance] = {}
        for u in self.utterances:
            if u.id in self._by_id:
                raise DuplicateUtteranceError(f"duplicate utterance id {u.id!r}")
            self._by_id[u.id] = u

    def __iter__(self) -> Iterator[Utterance]:
        return iter(self.utterances)

    def __len__(self) -> int:
        return len(self.utterances)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Corpus) and self.utterances == other.utterances

    def __repr__(self) -> str:
        return f"Corpus({len(self.utterances)} utterances)"

    def by_id(self, utt_id: str) -> Utterance:
        return self._by_id[utt_id]

    def filter(self, pred: Callable[[Utterance], bool]) -> "Corpus":
        return Corpus(u for u in self.utterances if pred(u))

    def restrict_languages(self, languages: Iterable[LanguageTag]) -> "Corpus":
        """Transcribed utterances whose tags all fall inside `languages`."""
        allowed = frozenset(languages)
        return Corpus(
            u for u in self.utterances if u.transcribed and u.languages <= allowed
        )

    def sentences(self) -> list[list[str]]:
        """Token surfaces of the transcribed utterances, one list per utterance."""
        return [u.surfaces() for u in self.utterances if u.transcribed]

    def concat(self, other: "Corpus") -> "Corpus":
        return Corpus(self.utterances + other.utterances)


@dataclass(frozen=True, slots=True)
class SwitchCounts:
    """Directional switch-point counts over adjacent token pairs."""

    eb: int = 0  # English -> Bantu
    be: int = 0  # Bantu -> English
    bantu_bantu: int = 0  # between two different Bantu languages

    def __add__(self, other: "SwitchCounts") -> "SwitchCounts":
        return SwitchCounts(
            self.eb + other.eb,
            self.be + other.be,
            self.bantu_bantu + other.bantu_bantu,
        )

    @property
    def total(self) -> int:
        return self.eb + self.be + self.bantu_bantu


def count_switches(utterance: Utterance) -> SwitchCounts:
    """Count language switches between adjacent tokens of one utterance.

    Bantu-to-Bantu switches are kept in their own counter because the
    directional EB/BE split is only defined against English.
    """
    if not utterance.transcribed:
        raise LabError(f"{utterance.id}: cannot count switches in an untranscribed utterance")
    eb = be = bb = 0
    for prev, cur in zip(utterance.tokens, utterance.tokens[1:]):
        if prev.lang is cur.lang:
            continue
        if prev.lang is LanguageTag.E:
            eb += 1
        elif cur.lang is LanguageTag.E:
            be += 1
        else:
            bb += 1
    return SwitchCounts(eb, be, bb)


@dataclass(frozen=True, slots=True)
class LanguageStats:
    mono_duration: float = 0.0
    cs_duration: float = 0.0
    tokens: int = 0
    types: int = 0


@dataclass(frozen=True)
class CorpusStats:
    """Descriptive statistics of a corpus.

    A transcribed utterance is monolingual when all its tokens share one tag;
    otherwise its full duration is attributed to every language present in it
    (`per_language[*].cs_duration`), and counted once in `cs_duration`.
    """

    per_language: Mapping[LanguageTag, LanguageStats]
    utterances: int
    monolingual_utterances: int
    code_switched_utterances: int
    untranscribed_utterances: int
    total_duration: float
    mono_duration: float
    cs_duration: float
    untranscribed_duration: float
    tokens: int
    switches: SwitchCounts

    def to_dict(self) -> dict:
        return {
            "per_language": {
                tag.value: {
                    "mono_duration": st.mono_duration,
                    "cs_duration": st.cs_duration,
                    "tokens": st.tokens,
                    "types": st.types,
                }
                for tag, st in sorted(self.per_language.items(), key=lambda kv: kv[0].value)
            },
            "utterances": self.utterances,
            "monolingual_utterances": self.monolingual_utterances,
            "code_switched_utterances": self.code_switched_utterances,
            "untranscribed_utterances": self.untranscribed_utterances,
            "total_duration": self.total_duration,
            "mono_duration": self.mono_duration,
            "cs_duration": self.cs_duration,
            "untranscribed_duration": self.untranscribed_duration,
            "tokens": self.tokens,
            "switches": {
                "eb": self.switches.eb,
                "be": self.switches.be,
                "bantu_bantu": self.switches.bantu_bantu,
            },
        }

    def format_table(self) -> str:
        rows = [f"{'Lang':<6}{'Mono(s)':>12}{'CS(s)':>12}{'Tokens':>10}{'Types':>10}"]
        for tag in LANGUAGES:
            st = self.per_language.get(tag)
            if st is None:
                continue
            rows.append(
                f"{tag.value:<6}{st.mono_duration:>12.2f}{st.cs_duration:>12.2f}"
                f"{st.tokens:>10}{st.types:>10}"
            )
        rows.append(
            f"{'total':<6}{self.mono_duration:>12.2f}{self.cs_duration:>12.2f}"
            f"{self.tokens:>10}"
        )
        rows.append(
            f"switches: EB={self.switches.eb} BE={self.switches.be} "
            f"Bantu-Bantu={self.switches.bantu_bantu}"
        )
        return "\n".join(rows)


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Per-language durations, token/type counts, and switch totals."""
    mono_dur: dict[LanguageTag, float] = {}
    cs_dur: dict[LanguageTag, float] = {}
    tokens: dict[LanguageTag, int] = {}
    types: dict[LanguageTag, set[str]] = {}
    n_mono = n_cs = n_untr = 0
    total_dur = mono_total = cs_total = untr_total = 0.0
    switches = SwitchCounts()
    for u in corpus:
        total_dur += u.duration
        if not u.transcribed:
            n_untr += 1
            untr_total += u.duration
            continue
        langs = u.languages
        if len(langs) == 1:
            n_mono += 1
            mono_total += u.duration
            (lang,) = langs
            mono_dur[lang] = mono_dur.get(lang, 0.0) + u.duration
        else:
            n_cs += 1
            cs_total += u.duration
            for lang in langs:
                cs_dur[lang] = cs_dur.get(lang, 0.0) + u.duration
        for tok in u.tokens:
            tokens[tok.lang] = tokens.get(tok.lang, 0) + 1
            types.setdefault(tok.lang, set()).add(tok.surface)
        switches = switches + count_switches(u)
    seen = set(mono_dur) | set(cs_dur) | set(tokens)
    per_language = {
        lang: LanguageStats(
            mono_duration=mono_dur.get(lang, 0.0),
            cs_duration=cs_dur.get(lang, 0.0),
            tokens=tokens.get(lang, 0),
            types=len(types.get(lang, ())),
        )
        for lang in seen
    }
    return CorpusStats(
        per_language=per_language,
        utterances=len(corpus),
        monolingual_utterances=n_mono,
        code_switched_utterances=n_cs,
        untranscribed_utterances=n_untr,
        total_duration=total_dur,
        mono_duration=mono_total,
        cs_duration=cs_total,
        untranscribed_duration=untr_total,
        tokens=sum(tokens.values()),
        switches=switches,
    )


# --- file I/O ---------------------------------------------------------------
#
# One utterance per line, tab separated:
#   <utt_id> TAB <speaker> TAB <batch> TAB <duration_seconds> TAB <tokens>
# where <tokens> is space-separated surface_TAG entries or a literal `-` for an
# untranscribed utterance. An optional sixth field carries `status` or
# `status:provenance` (e.g. `auto:A`). `#` starts a comment line. A `-`
# duration is accepted on input and read as 0.0 (used by generated text).


def iter_data_lines(path: Path) -> Iterator[tuple[int, list[str]]]:
    """Yield (line_number, tab_fields) for every non-comment, non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line.split("\t")


def parse_token(text: str) -> TaggedToken:
    surface, sep, code = text.rpartition("_")
    if not sep or not surface:
        raise CorpusFormatError(f"token {text!r} is missing a language tag")
    return TaggedToken(surface, LanguageTag.parse(code))


def _parse_duration(text: str) -> float:
    if text == "-":
        return 0.0
    try:
        value = float(text)
    except ValueError:
        raise CorpusFormatError(f"bad duration {text!r}") from None
    if value < 0:
        raise CorpusFormatError(f"negative duration {text!r}")
    return value


def _parse_status(field: str) -> tuple[Status, str | None]:
    name, _, provenance = field.partition(":")
    try:
        status = Status(name)
    except ValueError:
        raise CorpusFormatError(f"bad status field {field!r}") from None
    return status, provenance or None


def load_corpus(path: str | Path) -> Corpus:
    """Read a corpus file; order preserved, duplicate ids rejected."""
    path = Path(path)
    utterances: list[Utterance] = []
    seen: set[str] = set()
    for lineno, fields in iter_data_lines(path):
        where = f"{path}:{lineno}"
        if len(fields) not in (5, 6):
            raise CorpusFormatError(
                f"{where}: expected 5 or 6 tab-separated fields, got {len(fields)}"
            )
        utt_id, speaker, batch, dur_text, token_text = fields[:5]
        if utt_id in seen:
            raise DuplicateUtteranceError(f"{where}: duplicate utterance id {utt_id!r}")
        seen.add(utt_id)
        try:
            duration = _parse_duration(dur_text)
            if token_text == "-":
                tokens: tuple[TaggedToken, ...] = ()
            else:
                tokens = tuple(parse_token(t) for t in token_text.split(" ") if t)
            if len(fields) == 6:
                status, provenance = _parse_status(fields[5])
            else:
                status = Status.MANUAL if tokens else Status.UNTRANSCRIBED
                provenance = None
            utterances.append(
                Utterance(utt_id, speaker, batch, duration, tokens, status, provenance)
            )
        except UnknownLanguageError as exc:
            raise UnknownLanguageError(f"{where}: {exc}") from None
        except CorpusFormatError as exc:
            raise CorpusFormatError(f"{where}: {exc}") from None
        except ValueError as exc:
            raise CorpusFormatError(f"{where}: {exc}") from None
    return Corpus(utterances)


def format_utterance(u: Utterance) -> str:
    token_text = " ".join(str(t) for t in u.tokens) if u.tokens else "-"
    fields = [u.id, u.speaker, u.batch, repr(u.duration), token_text]
    if u.status is Status.AUTO:
        fields.append(f"auto:{u.provenance}")
    return "\t".join(fields)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus file that `load_corpus` reads back identically."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for u in corpus:
            fh.write(format_utterance(u) + "\n")
