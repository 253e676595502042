"""Artificial training text and synthetic code-switch trigrams for LM augmentation."""

from __future__ import annotations

import random
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

from .corpus import LanguageTag, TaggedToken
from .errors import LabError
from .lm import (
    EOS,
    Vocabulary,
    WeightSearch,
    WittenBellLM,
    interpolate,
    optimize_weight,
    train_ngram,
)


class _CumTable(NamedTuple):
    """Cumulative successor counts of one context, for bisect sampling."""

    words: list[str]
    cum: list[int]
    total: int


class Generator:
    """Ancestral sampler over a trained n-gram model.

    At temperature 1 sampling follows the Witten-Bell mixture exactly: with
    probability c(h)/(c(h)+T(h)) a word is drawn from the observed successors
    of the context, otherwise the context backs off one order, bottoming out
    in the unigram/uniform mix. Other temperatures rescale the full
    conditional distribution, which is slower. Identical seeds give identical
    streams.
    """

    def __init__(self, lm: WittenBellLM, seed: int, temperature: float = 1.0):
        if temperature <= 0:
            raise LabError("temperature must be positive")
        self.lm = lm
        self.seed = seed
        self.temperature = temperature
        self.vocab = lm.vocab
        self._events = sorted(lm.vocab.words) + ([EOS] if lm.boundaries else [])
        self._tables: dict[tuple[str, ...], _CumTable] = {}
        self._token_cache: dict[str, TaggedToken] = {}
        self._flat_cache: dict[tuple[str, ...], tuple[list[str], list[float]]] = {}

    def _table(self, ctx: tuple[str, ...]) -> _CumTable | None:
        table = self._tables.get(ctx)
        if table is None:
            succ = self.lm.successors(ctx)
            if not succ:
                return None
            words = sorted(succ)
            cum: list[int] = []
            acc = 0
            for w in words:
                acc += succ[w]
                cum.append(acc)
            table = _CumTable(words, cum, acc)
            self._tables[ctx] = table
        return table

    def _draw_exact(self, rng: random.Random, ctx: tuple[str, ...]) -> str:
        # Mixture form of interpolated Witten-Bell, applied level by level.
        while True:
            table = self._table(ctx)
            if table is None:
                if not ctx:
                    return self._events[rng.randrange(len(self._events))]
                ctx = ctx[1:]
                continue
            t = len(table.words)
            u = rng.random() * (table.total + t)
            if u < table.total:
                return table.words[bisect_right(table.cum, u)]
            if not ctx:
                return self._events[rng.randrange(len(self._events))]
            ctx = ctx[1:]

    def _draw_tempered(self, rng: random.Random, ctx: tuple[str, ...]) -> str:
        flat = self._flat_cache.get(ctx)
        if flat is None:
            inv = 1.0 / self.temperature
            weights = [self.lm.prob(ctx, w) ** inv for w in self._events]
            total = sum(weights)
            cum: list[float] = []
            acc = 0.0
            for w in weights:
                acc += w / total
                cum.append(acc)
            flat = (self._events, cum)
            self._flat_cache[ctx] = flat
        events, cum = flat
        u = rng.random()
        lo, hi = 0, len(cum) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if cum[mid] < u:
                lo = mid + 1
            else:
                hi = mid
        return events[lo]

    def stream_surfaces(self, n_words: int) -> Iterator[list[str]]:
        """Yield sentences of raw surfaces until exactly n_words are emitted."""
        if n_words < 1:
            raise LabError("n_words must be at least 1")
        rng = random.Random(f"{self.seed}/generate")
        lm = self.lm
        span = lm.order - 1
        from .lm import BOS

        pad = (BOS,) * span if lm.boundaries else ()
        draw = self._draw_exact if self.temperature == 1.0 else self._draw_tempered
        emitted = 0
        sentence: list[str] = []
        ctx = pad
        while emitted < n_words:
            word = draw(rng, ctx)
            if word == EOS:
                if sentence:
                    yield sentence
                    sentence = []
                ctx = pad
                continue
            sentence.append(word)
            emitted += 1
            ctx = (ctx + (word,))[-span:] if span else ()
        if sentence:
            yield sentence

    def token_for(self, surface: str) -> TaggedToken:
        tok = self._token_cache.get(surface)
        if tok is None:
            tags = self.vocab.tags_of(surface)
            if not tags:
                raise LabError(f"generated surface {surface!r} has no language tag")
            tok = TaggedToken(surface, tags[0])
            self._token_cache[surface] = tok
        return tok

    def stream(self, n_words: int) -> Iterator[list[TaggedToken]]:
        for sentence in self.stream_surfaces(n_words):
            yield [self.token_for(s) for s in sentence]


def train_generator(
    texts: Sequence[Sequence[str]],
    vocab: Vocabulary,
    seed: int,
    order: int = 3,
    temperature: float = 1.0,
) -> Generator:
    """Fit the sampling model on text; deterministic given the seed."""
    if not texts:
        raise LabError("cannot fit a generator on empty text")
    lm = train_ngram(texts, vocab, order=order)
    return Generator(lm, seed=seed, temperature=temperature)


def generate(generator: Generator, n_words: int) -> list[list[TaggedToken]]:
    """Exactly n_words tagged tokens, segmented at sampled sentence ends."""
    return [sentence for sentence in generator.stream(n_words)]


@dataclass(frozen=True)
class SyntheticTrigram:
    """Three tagged words whose first pair crosses languages, with a sample count."""

    tokens: tuple[TaggedToken, TaggedToken, TaggedToken]
    multiplicity: int

    def __post_init__(self) -> None:
        w1, w2, w3 = self.tokens
        if w1.lang is w2.lang and w2.lang is w3.lang:
            raise ValueError("synthetic trigram must cross languages somewhere")

    def sentences(self) -> list[list[TaggedToken]]:
        return [[*self.tokens]] * self.multiplicity


class _UnigramTable:
    def __init__(self, lm: WittenBellLM):
        succ = lm.successors(())
        self.words = sorted(w for w in succ if w != EOS)
        if not self.words:
            raise LabError("language model has no word unigrams to sample")
        self.cum: list[int] = []
        acc = 0
        for w in self.words:
            acc += succ[w]
            self.cum.append(acc)
        self.total = acc

    def draw(self, rng: random.Random) -> str:
        u = rng.random() * self.total
        return self.words[bisect_right(self.cum, u)]


def synthesize_cs_trigrams(
    lm_by_language: Mapping[LanguageTag, WittenBellLM],
    switch_stats,
    n: int,
    seed: int = 0,
) -> list[SyntheticTrigram]:
    """Sample n code-switch trigrams.

    The switch direction (English-to-Bantu vs the reverse) follows the EB/BE
    proportions in `switch_stats`; w1 comes from the source language's unigram
    distribution, w2 from the target language's unigram, and w3 continues w2
    under the target language's own model, excluding the end symbol. Output is
    aggregated with multiplicities and ordered deterministically.
    """
    if n < 1:
        raise LabError("n must be at least 1")
    langs = set(lm_by_language)
    bantu = sorted((l for l in langs if l.is_bantu), key=lambda l: l.value)
    if LanguageTag.E not in langs or not bantu:
        raise LabError("need English and at least one Bantu language model")
    eb = getattr(switch_stats, "eb", 0)
    be = getattr(switch_stats, "be", 0)
    eb_share = eb / (eb + be) if (eb + be) else 0.5
    unigrams = {lang: _UnigramTable(lm) for lang, lm in lm_by_language.items()}
    rng = random.Random(f"{seed}/cs-trigrams")
    counts: dict[tuple[TaggedToken, TaggedToken, TaggedToken], int] = {}
    for _ in range(n):
        e_to_b = rng.random() < eb_share
        b_lang = bantu[rng.randrange(len(bantu))] if len(bantu) > 1 else bantu[0]
        src, dst = (LanguageTag.E, b_lang) if e_to_b else (b_lang, LanguageTag.E)
        w1 = TaggedToken(unigrams[src].draw(rng), src)
        w2 = TaggedToken(unigrams[dst].draw(rng), dst)
        w3 = TaggedToken(_continuation(lm_by_language[dst], w2.surface, rng), dst)
        key = (w1, w2, w3)
        counts[key] = counts.get(key, 0) + 1
    ordered = sorted(counts.items(), key=lambda kv: tuple(str(t) for t in kv[0]))
    return [SyntheticTrigram(tokens, mult) for tokens, mult in ordered]


def _continuation(lm: WittenBellLM, word: str, rng: random.Random) -> str:
    """Draw a follower of `word` from the bigram conditional, skipping </s>."""
    succ = lm.successors((word,))
    candidates = sorted(w for w in succ if w != EOS)
    if candidates:
        cum: list[int] = []
        acc = 0
        for w in candidates:
            acc += succ[w]
            cum.append(acc)
        # Mix between observed successors and the unigram fallback, mirroring
        # the smoothing weights but restricted to word events.
        t = len(succ)
        u = rng.random() * (acc + t)
        if u < acc:
            return candidates[bisect_right(cum, u)]
    table = _UnigramTable(lm)
    return table.draw(rng)


def augment_lm(
    base: WittenBellLM,
    extra_texts: Sequence[Sequence[str]],
    dev: Sequence[Sequence[str]],
) -> tuple[object, WeightSearch]:
    """Train on the extra text and mix it into `base` at the dev-optimal weight.

    Returns (mixed model, weight search result); composable as a left fold for
    stacking several augmentation sources.
    """
    if not extra_texts:
        raise LabError("no augmentation text supplied")
    extra_lm = train_ngram(extra_texts, base.vocab, order=base.order, boundaries=base.boundaries)
    search = optimize_weight(extra_lm, base, dev)
    return interpolate(extra_lm, base, search.weight), search
