"""Closed-vocabulary n-gram language models with interpolated Witten-Bell smoothing.

Model surface shared by all implementations here:

    lm.order        n (1..3)
    lm.vocab        Vocabulary (closed; scoring an outside word is an error)
    lm.boundaries   True  -> sentences are padded with `<s>` context and a
                             `</s>` event is scored after the last word, so the
                             prediction space is vocab + `</s>`.
                    False -> no padding, no end event; the prediction space is
                             the vocabulary alone and contexts shorter than
                             n-1 are scored with the matching lower order.
    lm.prob(context, word)
    lm.logp(context, word)

Every conditional distribution sums to 1 over its prediction space.
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

from .corpus import Corpus, LanguageTag, TaggedToken
from .errors import LabError

BOS = "<s>"
EOS = "</s>"

MAX_ORDER = 3


class OOVError(LabError):
    """A token outside the closed vocabulary was used for training or scoring."""


class VocabularyMismatchError(LabError):
    pass


class ArpaFormatError(LabError):
    pass


class Vocabulary:
    """Closed word inventory, optionally partitioned by language.

    `words` is the scoring vocabulary; `by_language` is auxiliary metadata used
    by lexicons and generators (a surface may belong to several languages).
    Boundary symbols are not members.
    """

    def __init__(
        self,
        words: Iterable[str],
        by_language: Mapping[LanguageTag, Iterable[str]] | None = None,
    ):
        self.words: frozenset[str] = frozenset(words)
        if BOS in self.words or EOS in self.words:
            raise LabError("boundary symbols cannot be vocabulary members")
        if not self.words:
            raise LabError("empty vocabulary")
        self.by_language: dict[LanguageTag, frozenset[str]] = {
            lang: frozenset(ws) for lang, ws in (by_language or {}).items()
        }
        extra = frozenset().union(*self.by_language.values()) - self.words if self.by_language else frozenset()
        if extra:
            raise LabError(f"language sets contain words outside the vocabulary: {sorted(extra)[:5]}")
        self._tags: dict[str, tuple[LanguageTag, ...]] = {}
        for lang in LanguageTag:
            for w in self.by_language.get(lang, ()):
                self._tags.setdefault(w, ())
                self._tags[w] = self._tags[w] + (lang,)

    @classmethod
    def from_tagged(cls, tokens: Iterable[TaggedToken]) -> "Vocabulary":
        by_lang: dict[LanguageTag, set[str]] = {}
        for tok in tokens:
            by_lang.setdefault(tok.lang, set()).add(tok.surface)
        union = set().union(*by_lang.values()) if by_lang else set()
        return cls(union, by_lang)

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "Vocabulary":
        return cls.from_tagged(tok for u in corpus if u.transcribed for tok in u.tokens)

    def __contains__(self, word: str) -> bool:
        return word in self.words

    def __len__(self) -> int:
        return len(self.words)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.words == other.words

    def tags_of(self, surface: str) -> tuple[LanguageTag, ...]:
        """Language tags of a surface in canonical order; empty if untagged."""
        return self._tags.get(surface, ())


def _check_order(order: int) -> None:
    if not 1 <= order <= MAX_ORDER:
        raise LabError(f"order must be between 1 and {MAX_ORDER}, got {order}")


def _score_events(
    sentences: Iterable[Sequence[str]], order: int, boundaries: bool
) -> Iterator[tuple[tuple[str, ...], str]]:
    """Yield (context, event) pairs in scoring order.

    With boundaries the context is `<s>`-padded to order-1 and a `</s>` event
    closes each sentence; without, contexts are the bare preceding words.
    """
    pad = (BOS,) * (order - 1) if boundaries else ()
    for sent in sentences:
        ctx = pad
        for word in sent:
            yield ctx, word
            ctx = (ctx + (word,))[-(order - 1):] if order > 1 else ()
        if boundaries:
            yield ctx, EOS


class WittenBellLM:
    """Interpolated Witten-Bell n-gram model.

    For a context h with successor-event total c(h) and T(h) distinct
    successor types,

        P(w | h) = (c(h, w) + T(h) * P(w | tail(h))) / (c(h) + T(h))

    falling through to the lower order when h was never seen as a context.
    The recursion bottoms out in the unigram estimate smoothed against the
    uniform distribution over the prediction space. Counts are collected at
    scoring positions only, which makes every conditional sum to exactly 1.
    """

    def __init__(
        self,
        order: int,
        vocab: Vocabulary,
        boundaries: bool,
        successors: list[dict[tuple[str, ...], dict[str, int]]],
        context_totals: list[dict[tuple[str, ...], int]],
    ):
        self.order = order
        self.vocab = vocab
        self.boundaries = boundaries
        # successors[k-1] maps a (k-1)-word context to {event: count}.
        self._succ = successors
        self._ctx_total = context_totals
        self._space = len(vocab.words) + (1 if boundaries else 0)
        self._logp_cache: dict[tuple[tuple[str, ...], str], float] = {}

    # -- scoring --------------------------------------------------------

    def _raw_prob(self, ctx: tuple[str, ...], word: str) -> float:
        k = len(ctx) + 1
        if k == 1:
            succ = self._succ[0][()]
            total = self._ctx_total[0][()]
            t = len(succ)
            return (succ.get(word, 0) + t / self._space) / (total + t)
        succ = self._succ[k - 1].get(ctx)
        if not succ:
            return self._raw_prob(ctx[1:], word)
        t = len(succ)
        total = self._ctx_total[k - 1][ctx]
        return (succ.get(word, 0) + t * self._raw_prob(ctx[1:], word)) / (total + t)

    def _check_query(self, context: Sequence[str], word: str) -> tuple[str, ...]:
        if word not in self.vocab.words and not (word == EOS and self.boundaries):
            raise OOVError(f"word {word!r} is outside the closed vocabulary")
        ctx = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        for c in ctx:
            if c not in self.vocab.words and c != BOS:
                raise OOVError(f"context word {c!r} is outside the closed vocabulary")
        return ctx

    def prob(self, context: Sequence[str], word: str) -> float:
        """Smoothed P(word | context); context longer than order-1 is truncated."""
        return self._raw_prob(self._check_query(context, word), word)

    def logp(self, context: Sequence[str], word: str) -> float:
        ctx = self._check_query(context, word)
        key = (ctx, word)
        cached = self._logp_cache.get(key)
        if cached is None:
            cached = math.log(self._raw_prob(ctx, word))
            self._logp_cache[key] = cached
        return cached

    # -- introspection used by serialization and sampling ----------------

    def seen_ngrams(self, k: int) -> Iterator[tuple[tuple[str, ...], str, int]]:
        """All (context, event, count) triples observed at order k."""
        for ctx, succ in self._succ[k - 1].items():
            for word, count in succ.items():
                yield ctx, word, count

    def context_stats(self, ctx: tuple[str, ...]) -> tuple[int, int]:
        """(successor-event total, distinct successor types) for a context."""
        succ = self._succ[len(ctx)].get(ctx)
        if not succ:
            return 0, 0
        return self._ctx_total[len(ctx)][ctx], len(succ)

    def successors(self, ctx: tuple[str, ...]) -> Mapping[str, int]:
        if len(ctx) >= self.order:
            return {}
        return self._succ[len(ctx)].get(ctx, {})


def train_ngram(
    sentences: Sequence[Sequence[str]],
    vocab: Vocabulary,
    order: int = 3,
    boundaries: bool = True,
) -> WittenBellLM:
    """Train an interpolated Witten-Bell model; deterministic, no randomness."""
    _check_order(order)
    if not sentences:
        raise LabError("cannot train on an empty corpus")
    for idx, sent in enumerate(sentences):
        for word in sent:
            if word not in vocab.words:
                raise OOVError(f"out-of-vocabulary token {word!r} in sentence {idx}")
    successors: list[dict[tuple[str, ...], dict[str, int]]] = [
        defaultdict(dict) for _ in range(order)
    ]
    context_totals: list[dict[tuple[str, ...], int]] = [defaultdict(int) for _ in range(order)]
    for k in range(1, order + 1):
        for ctx, event in _score_events(sentences, k, boundaries):
            if len(ctx) != k - 1:
                # Without boundary padding the first positions of a sentence
                # have short contexts; they are counted at their own order.
                continue
            bucket = successors[k - 1][ctx]
            bucket[event] = bucket.get(event, 0) + 1
            context_totals[k - 1][ctx] += 1
    successors = [dict(level) for level in successors]
    context_totals = [dict(level) for level in context_totals]
    if not context_totals[0].get((), 0):
        raise LabError("cannot train on an empty corpus")
    return WittenBellLM(order, vocab, boundaries, successors, context_totals)


class InterpolatedLM:
    """Pointwise mixture of two models over the same vocabulary and mode."""

    def __init__(self, first, second, weight: float):
        self.first = first
        self.second = second
        self.weight = weight
        self.order = first.order
        self.vocab = first.vocab
        self.boundaries = first.boundaries

    def prob(self, context: Sequence[str], word: str) -> float:
        w = self.weight
        return w * self.first.prob(context, word) + (1.0 - w) * self.second.prob(context, word)

    def logp(self, context: Sequence[str], word: str) -> float:
        return math.log(self.prob(context, word))


def interpolate(lm1, lm2, weight: float) -> InterpolatedLM:
    """Mix two models: P = weight * P1 + (1 - weight) * P2."""
    if not 0.0 <= weight <= 1.0:
        raise LabError(f"interpolation weight must lie in [0, 1], got {weight}")
    if lm1.vocab != lm2.vocab:
        raise VocabularyMismatchError("cannot interpolate models with different vocabularies")
    if lm1.order != lm2.order:
        raise VocabularyMismatchError("cannot interpolate models of different order")
    if lm1.boundaries != lm2.boundaries:
        raise VocabularyMismatchError("cannot interpolate models with different boundary modes")
    return InterpolatedLM(lm1, lm2, weight)


def perplexity(lm, sentences: Sequence[Sequence[str]]) -> float:
    """exp of the mean negative log probability over the model's scoring events."""
    log_sum = 0.0
    n = 0
    for ctx, word in _score_events(sentences, lm.order, lm.boundaries):
        log_sum += lm.logp(ctx, word)
        n += 1
    if n == 0:
        raise LabError("no events to score")
    return math.exp(-log_sum / n)


WEIGHT_GRID = tuple(i / 100.0 for i in range(101))


class WeightSearch(NamedTuple):
    weight: float
    dev_ppl: float


# Perplexity differences below this relative size count as ties in the weight
# search; mixing two copies of one model perturbs probabilities by an ulp,
# and a strict comparison would then pick an arbitrary grid point.
TIE_RTOL = 1e-12


def optimize_weight(lm1, lm2, dev: Sequence[Sequence[str]]) -> WeightSearch:
    """Grid-search the mixture weight of lm1 that minimizes dev perplexity.

    The grid is 0.00..1.00 in steps of 0.01; ties (within numerical noise) go
    to the smallest weight, so two identical models give weight 0.
    """
    if lm1.vocab != lm2.vocab:
        raise VocabularyMismatchError("cannot tune models with different vocabularies")
    if not dev:
        raise LabError("empty development set")
    pairs = [
        (lm1.prob(ctx, word), lm2.prob(ctx, word))
        for ctx, word in _score_events(dev, lm1.order, lm1.boundaries)
    ]
    if not pairs:
        raise LabError("empty development set")
    n = len(pairs)
    best: WeightSearch | None = None
    for lam in WEIGHT_GRID:
        log_sum = 0.0
        for p1, p2 in pairs:
            log_sum += math.log(lam * p1 + (1.0 - lam) * p2)
        ppl = math.exp(-log_sum / n)
        if best is None or ppl < best.dev_ppl * (1.0 - TIE_RTOL):
            best = WeightSearch(lam, ppl)
    assert best is not None
    return best


# --- perplexity decomposition ------------------------------------------------


class CategoryPPL(NamedTuple):
    """Perplexity over one scored-word category; ppl is None when empty."""

    tokens: int
    ppl: float | None

    @classmethod
    def from_logs(cls, logs: list[float]) -> "CategoryPPL":
        if not logs:
            return cls(0, None)
        return cls(len(logs), math.exp(-sum(logs) / len(logs)))


class PerplexityReport(NamedTuple):
    overall: CategoryPPL          # all events including sentence ends
    cpp_all: CategoryPPL          # first word after any language switch
    cpp_eb: CategoryPPL           # switch word whose predecessor is English
    cpp_be: CategoryPPL           # English word whose predecessor is Bantu
    mpp_all: CategoryPPL          # words whose predecessor shares their tag
    mpp_by_language: dict         # LanguageTag -> CategoryPPL

    def to_dict(self) -> dict:
        def cell(c: CategoryPPL) -> dict:
            return {"tokens": c.tokens, "ppl": c.ppl}

        return {
            "overall": cell(self.overall),
            "cpp_all": cell(self.cpp_all),
            "cpp_eb": cell(self.cpp_eb),
            "cpp_be": cell(self.cpp_be),
            "mpp_all": cell(self.mpp_all),
            "mpp_by_language": {
                tag.value: cell(c)
                for tag, c in sorted(self.mpp_by_language.items(), key=lambda kv: kv[0].value)
            },
        }

    def format_table(self) -> str:
        def fmt(c: CategoryPPL) -> str:
            return f"{c.ppl:>10.1f} ({c.tokens})" if c.ppl is not None else f"{'-':>10} (0)"

        lines = [
            f"overall : {fmt(self.overall)}",
            f"CPP all : {fmt(self.cpp_all)}",
            f"CPP EB  : {fmt(self.cpp_eb)}",
            f"CPP BE  : {fmt(self.cpp_be)}",
            f"MPP all : {fmt(self.mpp_all)}",
        ]
        for tag, cell in sorted(self.mpp_by_language.items(), key=lambda kv: kv[0].value):
            lines.append(f"MPP {tag.value}   : {fmt(cell)}")
        return "\n".join(lines)


def decomposed_perplexity(lm, corpus: Corpus) -> PerplexityReport:
    """Split perplexity into switch-point (CPP) and monolingual (MPP) parts.

    A scored word is a switch word when its immediate predecessor carries a
    different tag: EB when the predecessor is English, BE when an English word
    follows a Bantu one, and Bantu-to-Bantu switch words count toward the
    combined CPP only. Every other word, including the first of an utterance,
    is monolingual and bucketed by its own tag. End-of-sentence events enter
    nothing but the overall figure, so CPP and MPP counts partition the words.
    """
    all_logs: list[float] = []
    cpp_all: list[float] = []
    cpp_eb: list[float] = []
    cpp_be: list[float] = []
    mpp_all: list[float] = []
    mpp_lang: dict[LanguageTag, list[float]] = {}
    pad = (BOS,) * (lm.order - 1) if lm.boundaries else ()
    for u in corpus:
        if not u.transcribed:
            raise LabError(f"{u.id}: cannot decompose an untranscribed utterance")
        ctx = pad
        prev: TaggedToken | None = None
        for tok in u.tokens:
            lp = lm.logp(ctx, tok.surface)
            all_logs.append(lp)
            if prev is not None and prev.lang is not tok.lang:
                cpp_all.append(lp)
                if prev.lang is LanguageTag.E:
                    cpp_eb.append(lp)
                elif tok.lang is LanguageTag.E:
                    cpp_be.append(lp)
            else:
                mpp_all.append(lp)
                mpp_lang.setdefault(tok.lang, []).append(lp)
            ctx = (ctx + (tok.surface,))[-(lm.order - 1):] if lm.order > 1 else ()
            prev = tok
        if lm.boundaries:
            all_logs.append(lm.logp(ctx, EOS))
    return PerplexityReport(
        overall=CategoryPPL.from_logs(all_logs),
        cpp_all=CategoryPPL.from_logs(cpp_all),
        cpp_eb=CategoryPPL.from_logs(cpp_eb),
        cpp_be=CategoryPPL.from_logs(cpp_be),
        mpp_all=CategoryPPL.from_logs(mpp_all),
        mpp_by_language={tag: CategoryPPL.from_logs(logs) for tag, logs in mpp_lang.items()},
    )


# --- ARPA serialization ------------------------------------------------------
#
# Standard text layout: a \data\ header with per-order entry counts, one
# \N-grams: section per order listing `log10prob TAB ngram [TAB log10backoff]`,
# then \end\. Logs are written with 6 decimal digits. Entries that exist only
# to host a backoff weight (such as <s>) carry the conventional -99 "probability".

LOG10_FLOOR = -99.0


def _arpa_entries(lm: WittenBellLM) -> list[dict[tuple[str, ...], tuple[float | None, float | None]]]:
    """Per order: ngram -> (log10 prob or None for placeholders, log10 bow or None)."""
    levels: list[dict[tuple[str, ...], tuple[float | None, float | None]]] = []
    for k in range(1, lm.order + 1):
        entries: dict[tuple[str, ...], tuple[float | None, float | None]] = {}
        if k == 1:
            words = sorted(lm.vocab.words) + ([EOS] if lm.boundaries else [])
            for w in words:
                entries[(w,)] = (math.log10(lm.prob((), w)), None)
        else:
            for ctx, word, _count in lm.seen_ngrams(k):
                gram = ctx + (word,)
                entries[gram] = (math.log10(lm.prob(ctx, word)), None)
        if k < lm.order:
            # Contexts of the next order need a backoff weight; unseen-as-event
            # contexts (like <s>) get placeholder probabilities.
            for ctx in lm._succ[k]:
                total, types = lm.context_stats(ctx)
                bow = math.log10(types / (total + types))
                prob, _ = entries.get(ctx, (None, None))
                entries[ctx] = (prob, bow)
        levels.append(entries)
    return levels


def save_arpa(lm: WittenBellLM | "BackoffLM", path: str | Path) -> None:
    """Serialize a trained or loaded backoff model as ARPA text."""
    if isinstance(lm, BackoffLM):
        levels = lm._entries
    elif isinstance(lm, WittenBellLM):
        levels = _arpa_entries(lm)
    else:
        raise LabError(
            f"cannot serialize {type(lm).__name__} as ARPA; "
            "save the component models and the mixture weight instead"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\\data\\\n")
        for k, entries in enumerate(levels, 1):
            fh.write(f"ngram {k}={len(entries)}\n")
        fh.write("\n")
        for k, entries in enumerate(levels, 1):
            fh.write(f"\\{k}-grams:\n")
            for gram in sorted(entries):
                prob, bow = entries[gram]
                prob_text = f"{LOG10_FLOOR:.6f}" if prob is None else f"{prob:.6f}"
                line = f"{prob_text}\t{' '.join(gram)}"
                if bow is not None:
                    line += f"\t{bow:.6f}"
                fh.write(line + "\n")
            fh.write("\n")
        fh.write("\\end\\\n")


class BackoffLM:
    """Model reconstructed from an ARPA file.

    P(w | h) is the stored probability when (h, w) is listed, otherwise
    bow(h) * P(w | tail(h)) with an implicit backoff weight of 1 for unlisted
    contexts. Stored log10 values are kept verbatim so that saving again
    reproduces the file byte for byte.
    """

    def __init__(self, entries: list[dict[tuple[str, ...], tuple[float | None, float | None]]]):
        self._entries = entries
        self.order = len(entries)
        words = {g[0] for g in entries[0]} - {BOS, EOS}
        self.boundaries = any(g == (EOS,) for g in entries[0])
        self.vocab = Vocabulary(words)
        self._probs: list[dict[tuple[str, ...], float]] = []
        self._bows: list[dict[tuple[str, ...], float]] = []
        for level in entries:
            probs = {}
            bows = {}
            for gram, (lp, bw) in level.items():
                if lp is not None and lp > LOG10_FLOOR:
                    probs[gram] = 10.0 ** lp
                if bw is not None:
                    bows[gram] = 10.0 ** bw
            self._probs.append(probs)
            self._bows.append(bows)
        self._logp_cache: dict[tuple[tuple[str, ...], str], float] = {}

    def _check_query(self, context: Sequence[str], word: str) -> tuple[str, ...]:
        if word not in self.vocab.words and not (word == EOS and self.boundaries):
            raise OOVError(f"word {word!r} is outside the closed vocabulary")
        return tuple(context)[-(self.order - 1):] if self.order > 1 else ()

    def _raw_prob(self, ctx: tuple[str, ...], word: str) -> float:
        gram = ctx + (word,)
        k = len(gram)
        stored = self._probs[k - 1].get(gram)
        if stored is not None:
            return stored
        if not ctx:
            raise OOVError(f"word {word!r} has no unigram entry")
        bow = self._bows[len(ctx) - 1].get(ctx, 1.0)
        return bow * self._raw_prob(ctx[1:], word)

    def prob(self, context: Sequence[str], word: str) -> float:
        return self._raw_prob(self._check_query(context, word), word)

    def logp(self, context: Sequence[str], word: str) -> float:
        ctx = self._check_query(context, word)
        key = (ctx, word)
        cached = self._logp_cache.get(key)
        if cached is None:
            cached = math.log(self._raw_prob(ctx, word))
            self._logp_cache[key] = cached
        return cached


def load_arpa(path: str | Path) -> BackoffLM:
    """Parse an ARPA file, validating the section counts against \\data\\."""
    path = Path(path)
    declared: dict[int, int] = {}
    levels: dict[int, dict[tuple[str, ...], tuple[float | None, float | None]]] = {}
    section: int | None = None
    state = "preamble"
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            if line == "\\data\\":
                state = "data"
                continue
            if line == "\\end\\":
                state = "end"
                continue
            if line.endswith("-grams:") and line.startswith("\\"):
                try:
                    section = int(line[1:].split("-")[0])
                except ValueError:
                    raise ArpaFormatError(f"{where}: bad section header {line!r}") from None
                levels[section] = {}
                state = "grams"
                continue
            if state == "data":
                if not line.startswith("ngram "):
                    raise ArpaFormatError(f"{where}: expected 'ngram N=count', got {line!r}")
                try:
                    k_text, count_text = line[len("ngram "):].split("=")
                    declared[int(k_text)] = int(count_text)
                except ValueError:
                    raise ArpaFormatError(f"{where}: bad ngram count line {line!r}") from None
                continue
            if state == "grams" and section is not None:
                parts = line.split("\t")
                if len(parts) == 1:
                    parts = line.split()
                    if len(parts) < section + 1:
                        raise ArpaFormatError(f"{where}: malformed {section}-gram line")
                    parts = [parts[0], " ".join(parts[1:section + 1])] + parts[section + 1:]
                if len(parts) not in (2, 3):
                    raise ArpaFormatError(f"{where}: malformed {section}-gram line")
                try:
                    lp = float(parts[0])
                    bow = float(parts[2]) if len(parts) == 3 else None
                except ValueError:
                    raise ArpaFormatError(f"{where}: bad log value on {section}-gram line") from None
                gram = tuple(parts[1].split(" "))
                if len(gram) != section:
                    raise ArpaFormatError(
                        f"{where}: {len(gram)}-token entry inside the \\{section}-grams section"
                    )
                levels[section][gram] = (lp if lp > LOG10_FLOOR else None, bow)
                continue
            raise ArpaFormatError(f"{where}: unexpected line {line!r}")
    if state != "end":
        raise ArpaFormatError(f"{path}: missing \\end\\ marker")
    if not declared:
        raise ArpaFormatError(f"{path}: missing \\data\\ section")
    orders = sorted(declared)
    if orders != list(range(1, len(orders) + 1)):
        raise ArpaFormatError(f"{path}: non-contiguous ngram orders {orders}")
    entries = []
    for k in orders:
        got = levels.get(k)
        if got is None:
            raise ArpaFormatError(f"{path}: missing \\{k}-grams section")
        if len(got) != declared[k]:
            raise ArpaFormatError(
                f"{path}: \\{k}-grams section has {len(got)} entries, header declares {declared[k]}"
            )
        entries.append(got)
    return BackoffLM(entries)
