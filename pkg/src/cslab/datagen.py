"""Synthetic multilingual corpora with ground truth for end-to-end experiments.

A scenario samples tagged utterances from a first-order language-switch
process with per-language Zipf word draws, then corrupts the true surfaces
through the word-confusion channel to produce observations. Everything is
derived from one master seed, so regeneration is byte-identical.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import (
    B1,
    B2,
    B3,
    BANTU,
    Corpus,
    LanguageTag,
    MANT,
    Status,
    TaggedToken,
    Utterance,
)
from .errors import LabError
from .recognizer import ChannelModel, Observation

PAIR_ORDER = ("EZ", "EX", "ES", "ET")

# Pools drawn from when composing pseudo-words.
_CONSONANTS = "bdfghjklmnpqrstvwz"
_VOWELS = "aeiou"

_RESAMPLE_LIMIT = 1000


def pair_label(pair: tuple[LanguageTag, LanguageTag]) -> str:
    return pair[0].value + pair[1].value


def parse_pair(label: str) -> tuple[LanguageTag, LanguageTag]:
    if len(label) != 2:
        raise LabError(f"bad language pair {label!r}")
    return LanguageTag.parse(label[0]), LanguageTag.parse(label[1])


@dataclass(frozen=True)
class ScenarioSpec:
    """Knobs of the synthetic world; see the reference scenario file for values."""

    vocab_sizes: Mapping[LanguageTag, int]
    word_len: Mapping[LanguageTag, tuple[int, int]]
    pairs: tuple[str, ...]
    utt_len: tuple[int, int]
    switch_rate: float
    cs_fraction: float
    batch_sizes: Mapping[str, int]  # utterances per language pair per batch
    dev_size: int
    test_size: int
    p_correct: float
    fanout: int
    seed: int
    cs_only_eval: bool = True  # dev/test hold code-switched utterances only
    zipf: float = 1.3  # word-frequency skew inside each language
    skew: float = 0.45  # true channel's preference for its closest confusions
    prior_fanout: int | None = None  # recognizer prior fanout; None = true fanout

    def __post_init__(self) -> None:
        if not 0.0 <= self.switch_rate <= 1.0:
            raise LabError("switch_rate must lie in [0, 1]")
        if not 0.0 <= self.cs_fraction <= 1.0:
            raise LabError("cs_fraction must lie in [0, 1]")
        if any(size < 1 for size in self.vocab_sizes.values()):
            raise LabError("vocabulary sizes must be at least 1")
        if any(n < 0 for n in self.batch_sizes.values()) or self.dev_size < 0 or self.test_size < 0:
            raise LabError("set sizes must be nonnegative")
        for label in self.pairs:
            parse_pair(label)


@dataclass(frozen=True)
class EvalSet:
    truth: Corpus
    observations: tuple[Observation, ...]


@dataclass(frozen=True)
class BatchData:
    truth: Corpus
    observations: tuple[Observation, ...]


@dataclass(frozen=True)
class ScenarioData:
    spec: ScenarioSpec
    lexicons: Mapping[LanguageTag, tuple[str, ...]]
    batches: Mapping[str, BatchData]  # ManT, B1, B2, B3
    dev: Mapping[str, EvalSet]  # keyed by pair label
    test: Mapping[str, EvalSet]
    channel: ChannelModel  # the true channel over the union lexicon

    @property
    def mant(self) -> Corpus:
        return self.batches[MANT].truth

    def vocabulary(self):
        """Closed vocabulary over the full lexicons (covers train, dev, and test)."""
        from .lm import Vocabulary

        return Vocabulary(
            set().union(*(set(ws) for ws in self.lexicons.values())),
            {lang: set(ws) for lang, ws in self.lexicons.items()},
        )


def _sub_rng(seed: int, label: str) -> random.Random:
    return random.Random(f"{seed}/{label}")


def _make_word(rng: random.Random, length: int, suffix: str) -> str:
    core = []
    for i in range(max(length - len(suffix), 1)):
        pool = _CONSONANTS if i % 2 == 0 else _VOWELS
        core.append(rng.choice(pool))
    return "".join(core) + suffix


def build_languages(spec: ScenarioSpec) -> dict[LanguageTag, tuple[str, ...]]:
    """Deterministic pseudo-word lexicons, disjoint across languages.

    Each surface ends in a language-specific suffix letter, so homographs
    cannot arise between languages.
    """
    lexicons: dict[LanguageTag, tuple[str, ...]] = {}
    for lang, size in spec.vocab_sizes.items():
        rng = _sub_rng(spec.seed, f"lexicon/{lang.value}")
        lo, hi = spec.word_len.get(lang, (3, 7))
        suffix = lang.value.lower()
        words: list[str] = []
        seen: set[str] = set()
        attempts = 0
        while len(words) < size:
            attempts += 1
            word = _make_word(rng, rng.randint(lo, hi + min(attempts // (size * 20), 4)), suffix)
            if word not in seen:
                seen.add(word)
                words.append(word)
        lexicons[lang] = tuple(words)
    return lexicons


class _ZipfSampler:
    """Zipf-weighted word draws over one language's lexicon."""

    def __init__(self, words: Sequence[str], exponent: float = 1.0):
        self.words = list(words)
        weights = [1.0 / (rank + 1) ** exponent for rank in range(len(words))]
        total = sum(weights)
        self.cum: list[float] = []
        acc = 0.0
        for w in weights:
            acc += w / total
            self.cum.append(acc)

    def draw(self, rng: random.Random) -> str:
        u = rng.random()
        lo, hi = 0, len(self.cum) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.cum[mid] < u:
                lo = mid + 1
            else:
                hi = mid
        return self.words[lo]


def _sample_tokens(
    rng: random.Random,
    pair: tuple[LanguageTag, LanguageTag],
    samplers: Mapping[LanguageTag, _ZipfSampler],
    length: int,
    switch_rate: float,
    want_switch: bool,
) -> tuple[TaggedToken, ...]:
    for _ in range(_RESAMPLE_LIMIT):
        lang = pair[rng.randrange(2)]
        tokens = []
        for _ in range(length):
            tokens.append(TaggedToken(samplers[lang].draw(rng), lang))
            if rng.random() < switch_rate:
                lang = pair[1] if lang is pair[0] else pair[0]
        langs = {t.lang for t in tokens}
        if not want_switch or len(langs) > 1 or switch_rate == 0.0:
            return tuple(tokens)
    return tuple(tokens)


def _mono_tokens(
    rng: random.Random,
    lang: LanguageTag,
    samplers: Mapping[LanguageTag, _ZipfSampler],
    length: int,
) -> tuple[TaggedToken, ...]:
    return tuple(TaggedToken(samplers[lang].draw(rng), lang) for _ in range(length))


def _gen_set(
    spec: ScenarioSpec,
    samplers: Mapping[LanguageTag, _ZipfSampler],
    channel: ChannelModel,
    batch: str,
    count_per_pair: int,
    cs_only: bool,
    pairs: tuple[str, ...] | None = None,
) -> tuple[Corpus, tuple[Observation, ...]]:
    utterances: list[Utterance] = []
    observations: list[Observation] = []
    lo, hi = spec.utt_len
    for label in pairs if pairs is not None else spec.pairs:
        pair = parse_pair(label)
        rng = _sub_rng(spec.seed, f"{batch}/{label}")
        for i in range(count_per_pair):
            length = rng.randint(lo, hi)
            cs = cs_only or rng.random() < spec.cs_fraction
            if cs:
                tokens = _sample_tokens(rng, pair, samplers, length, spec.switch_rate, True)
            else:
                tokens = _mono_tokens(rng, pair[rng.randrange(2)], samplers, length)
            duration = round(len(tokens) * (0.3 + 0.2 * rng.random()), 2)
            utt_id = f"{batch}_{label}_{i:04d}"
            speaker = f"{label}s{rng.randrange(10)}"
            utterances.append(
                Utterance(utt_id, speaker, batch, duration, tokens, Status.MANUAL)
            )
            symbols = channel.corrupt([t.surface for t in tokens], rng)
            observations.append(Observation(utt_id, speaker, batch, duration, symbols))
    return Corpus(utterances), tuple(observations)


def generate_corpus(spec: ScenarioSpec) -> ScenarioData:
    """Sample the full scenario: batches, per-pair dev/test sets, ground truth."""
    lexicons = build_languages(spec)
    union = sorted(set().union(*(set(ws) for ws in lexicons.values())))
    channel = ChannelModel(union, p_correct=spec.p_correct, fanout=spec.fanout,
                           skew=spec.skew)
    samplers = {lang: _ZipfSampler(words, spec.zipf) for lang, words in lexicons.items()}
    batches: dict[str, BatchData] = {}
    for batch in (MANT, B1, B2, B3):
        truth, obs = _gen_set(
            spec, samplers, channel, batch, spec.batch_sizes.get(batch, 0), cs_only=False
        )
        batches[batch] = BatchData(truth, obs)
    dev: dict[str, EvalSet] = {}
    test: dict[str, EvalSet] = {}
    for name, size, store in (("dev", spec.dev_size, dev), ("test", spec.test_size, test)):
        for label in spec.pairs:
            truth, obs = _gen_set(
                spec, samplers, channel, name, size,
                cs_only=spec.cs_only_eval, pairs=(label,),
            )
            store[label] = EvalSet(truth, obs)
    return ScenarioData(
        spec=spec,
        lexicons=lexicons,
        batches=batches,
        dev=dev,
        test=test,
        channel=channel,
    )


# --- scenario files ----------------------------------------------------------
#
# Plain `key = value` lines; `#` starts a comment. Keys:
#   seed, switch_rate, cs_fraction, p_correct, fanout, utt_len (lo:hi),
#   pairs (space-separated labels), languages (CODE:size entries),
#   word_len / word_len.CODE (lo:hi), mant/b1/b2/b3/dev/test (sizes per pair),
#   cs_only_eval (true/false).


def parse_kv_file(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise LabError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _parse_range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi or lo)


def load_scenario(path: str | Path, seed_override: int | None = None) -> ScenarioSpec:
    """Parse a scenario specification file."""
    raw = parse_kv_file(path)
    try:
        vocab_sizes: dict[LanguageTag, int] = {}
        for entry in raw["languages"].split():
            code, _, size = entry.partition(":")
            vocab_sizes[LanguageTag.parse(code)] = int(size)
        default_len = _parse_range(raw.get("word_len", "3:7"))
        word_len = {lang: default_len for lang in vocab_sizes}
        for key, value in raw.items():
            if key.startswith("word_len."):
                word_len[LanguageTag.parse(key.split(".", 1)[1])] = _parse_range(value)
        pairs = tuple(raw.get("pairs", "EZ EX ES ET").split())
        batch_sizes = {
            MANT: int(raw.get("mant", "0")),
            B1: int(raw.get("b1", "0")),
            B2: int(raw.get("b2", "0")),
            B3: int(raw.get("b3", "0")),
        }
        return ScenarioSpec(
            vocab_sizes=vocab_sizes,
            word_len=word_len,
            pairs=pairs,
            utt_len=_parse_range(raw.get("utt_len", "4:10")),
            switch_rate=float(raw.get("switch_rate", "0.25")),
            cs_fraction=float(raw.get("cs_fraction", "0.6")),
            batch_sizes=batch_sizes,
            dev_size=int(raw.get("dev", "0")),
            test_size=int(raw.get("test", "0")),
            p_correct=float(raw.get("p_correct", "0.85")),
            fanout=int(raw.get("fanout", "4")),
            seed=seed_override if seed_override is not None else int(raw.get("seed", "0")),
            cs_only_eval=raw.get("cs_only_eval", "true").lower() in ("true", "1", "yes"),
            zipf=float(raw.get("zipf", "1.3")),
            skew=float(raw.get("skew", "0.45")),
            prior_fanout=int(raw["prior_fanout"]) if "prior_fanout" in raw else None,
        )
    except KeyError as exc:
        raise LabError(f"{path}: missing scenario key {exc}") from None
    except ValueError as exc:
        raise LabError(f"{path}: {exc}") from None
