"""Noisy-channel word recognizer: channel model, lexicon candidates, Viterbi decoding.

The recognizer consumes observations (sequences of observed word symbols),
scores candidate lexicon words with a word-confusion channel and an n-gram
language model, and emits a tagged hypothesis with a per-symbol confidence.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .corpus import (
    Corpus,
    CorpusFormatError,
    LanguageTag,
    Status,
    TaggedToken,
    Utterance,
    iter_data_lines,
)
from .errors import LabError
from .lm import BOS, EOS, Vocabulary, WittenBellLM, train_ngram
from .metrics import align

# Log emission score for observation/word pairs outside the channel's support.
# Keeps every lattice path finite without perturbing in-support probabilities.
OUT_OF_SUPPORT_P = 1e-30


def edit_distance(a: str, b: str) -> int:
    """Unit-cost Levenshtein distance between two strings."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[-1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def nearest_words(query: str, by_length: Mapping[int, Sequence[str]], m: int,
                  exclude_self: bool = False) -> list[str]:
    """The m entries nearest `query` by (edit distance, word) order.

    `by_length` buckets the lexicon by word length so that the |len(a)-len(b)|
    lower bound can prune whole buckets once m candidates are held.
    """
    if m <= 0:
        return []
    best: list[tuple[int, str]] = []
    worst = None
    qlen = len(query)
    max_len = max(by_length) if by_length else 0
    for delta in range(0, max(qlen, max_len) + 1):
        if worst is not None and len(best) >= m and delta > worst:
            break
        lengths = {qlen + delta, qlen - delta} if delta else {qlen}
        for ln in sorted(lengths):
            for word in by_length.get(ln, ()):
                if exclude_self and word == query:
                    continue
                d = edit_distance(query, word)
                item = (d, word)
                if len(best) < m:
                    best.append(item)
                    best.sort()
                    worst = best[-1][0]
                elif item < best[-1]:
                    best[-1] = item
                    best.sort()
                    worst = best[-1][0]
    return [w for _, w in best]


def _length_buckets(words: Iterable[str]) -> dict[int, list[str]]:
    buckets: dict[int, list[str]] = {}
    for w in sorted(words):
        buckets.setdefault(len(w), []).append(w)
    return buckets


class ChannelModel:
    """Word-confusion channel over a fixed lexicon.

    The prior shape: a true word is observed unchanged with probability
    `p_correct`, otherwise as one of its `fanout` nearest lexicon neighbours by
    edit distance, each equally likely. Re-estimation from (transcript,
    observation) pairs adds per-word confusion counts; the emission for a word
    with n observed pairs mixes its empirical distribution with the prior at
    pseudo-count `alpha`, so words with enough evidence get sharp, data-driven
    emissions while rare words keep the prior. This is what gives retraining
    on larger pools its effect. Optional deletion/insertion rates extend the
    corruption process (off by default, which keeps observations aligned with
    the truth one-to-one).
    """

    def __init__(
        self,
        lexicon: Iterable[str],
        p_correct: float = 0.9,
        fanout: int = 5,
        del_rate: float = 0.0,
        ins_rate: float = 0.0,
        alpha: float = 4.0,
        skew: float = 1.0,
        word_counts: Mapping[str, Mapping[str, int]] | None = None,
    ):
        self.lexicon = tuple(sorted(set(lexicon)))
        if not self.lexicon:
            raise LabError("channel lexicon is empty")
        if not 0.0 < p_correct <= 1.0:
            raise LabError(f"p_correct must lie in (0, 1], got {p_correct}")
        if not 0.0 <= del_rate < 0.5 or not 0.0 <= ins_rate < 0.5:
            raise LabError("deletion and insertion rates must lie in [0, 0.5)")
        if fanout < 1:
            raise LabError("fanout must be at least 1")
        if alpha <= 0:
            raise LabError("alpha must be positive")
        if not 0.0 < skew <= 1.0:
            raise LabError("skew must lie in (0, 1]")
        self.p_correct = p_correct
        self.fanout = fanout
        self.del_rate = del_rate
        self.ins_rate = ins_rate
        self.alpha = alpha
        # Geometric preference among the fanout neighbours: neighbour i gets
        # weight skew**i. At 1.0 the confusion mass is spread evenly; below it
        # each word favours its closest confusions, a per-word structure that
        # a flat prior cannot represent and must be learned from pairs.
        self.skew = skew
        self.word_counts: dict[str, dict[str, int]] = {
            w: dict(obs) for w, obs in (word_counts or {}).items()
        }
        self._word_totals = {w: sum(obs.values()) for w, obs in self.word_counts.items()}
        self._by_length = _length_buckets(self.lexicon)
        self._neighbor_cache: dict[str, tuple[str, ...]] = {}

    def _clone(self, p_correct: float, word_counts: dict[str, dict[str, int]]) -> "ChannelModel":
        other = ChannelModel.__new__(ChannelModel)
        other.lexicon = self.lexicon
        other.p_correct = p_correct
        other.fanout = self.fanout
        other.del_rate = self.del_rate
        other.ins_rate = self.ins_rate
        other.alpha = self.alpha
        other.skew = self.skew
        other.word_counts = word_counts
        other._word_totals = {w: sum(obs.values()) for w, obs in word_counts.items()}
        other._by_length = self._by_length
        other._neighbor_cache = self._neighbor_cache  # shared; same lexicon + fanout
        return other

    def neighbors(self, word: str) -> tuple[str, ...]:
        """The prior confusion set of a true word: its fanout nearest other entries."""
        cached = self._neighbor_cache.get(word)
        if cached is None:
            k = min(self.fanout, len(self.lexicon) - 1)
            cached = tuple(nearest_words(word, self._by_length, k, exclude_self=True))
            self._neighbor_cache[word] = cached
        return cached

    def _neighbor_weights(self, count: int) -> list[float]:
        raw = [self.skew**i for i in range(count)]
        total = sum(raw)
        return [w / total for w in raw]

    def prior_p(self, true_word: str, observed: str) -> float:
        if observed == true_word:
            return self.p_correct
        neigh = self.neighbors(true_word)
        if observed in neigh:
            if self.skew == 1.0:
                p = (1.0 - self.p_correct) / len(neigh)
            else:
                weights = self._neighbor_weights(len(neigh))
                p = (1.0 - self.p_correct) * weights[neigh.index(observed)]
            return max(p, OUT_OF_SUPPORT_P)  # a noise-free channel still logs finitely
        return OUT_OF_SUPPORT_P

    def emission_p(self, true_word: str, observed: str) -> float:
        counts = self.word_counts.get(true_word)
        prior = self.prior_p(true_word, observed)
        if not counts:
            return prior
        n = self._word_totals[true_word]
        return (counts.get(observed, 0) + self.alpha * prior) / (n + self.alpha)

    def emission_logp(self, true_word: str, observed: str) -> float:
        return math.log(self.emission_p(true_word, observed))

    def corrupt(self, surfaces: Sequence[str], rng: random.Random) -> tuple[str, ...]:
        """Sample an observation for a true surface sequence (prior shape only)."""
        out: list[str] = []
        for surface in surfaces:
            if self.del_rate and rng.random() < self.del_rate:
                continue
            if rng.random() < self.p_correct:
                out.append(surface)
            else:
                neigh = self.neighbors(surface)
                if not neigh:
                    out.append(surface)
                elif self.skew == 1.0:
                    out.append(rng.choice(neigh))
                else:
                    out.append(rng.choices(neigh, weights=self._neighbor_weights(len(neigh)))[0])
            if self.ins_rate and rng.random() < self.ins_rate:
                out.append(rng.choice(self.lexicon))
        if not out and surfaces:
            # Full deletion would make the observation undecodable.
            out.append(surfaces[0])
        return tuple(out)

    def reestimate(self, pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> "ChannelModel":
        """New channel fitted to aligned (transcript, observation) pairs.

        Re-estimates the global p_correct as the aligned agreement rate and
        collects per-word confusion counts from the matched and substituted
        alignment positions. An empty list returns the prior unchanged.
        """
        if not pairs:
            return self
        matches = total = 0
        counts: dict[str, dict[str, int]] = {}
        for truth, observed in pairs:
            if not truth:
                continue
            alignment = align(list(truth), list(observed))
            total += len(truth)
            for op in alignment.ops:
                if op.kind == "match":
                    matches += 1
                if op.kind in ("match", "substitution"):
                    true_word = truth[op.ref_idx]
                    obs_word = observed[op.hyp_idx]
                    bucket = counts.setdefault(true_word, {})
                    bucket[obs_word] = bucket.get(obs_word, 0) + 1
        if total == 0:
            return self
        estimate = max(matches / total, 1.0 / (total + 1))
        return self._clone(min(estimate, 1.0), counts)


@dataclass(frozen=True, slots=True)
class Observation:
    """An untranscribed segment: observed word symbols plus metadata."""

    id: str
    speaker: str
    batch: str
    duration: float
    symbols: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if any(not s or any(ch.isspace() for ch in s) for s in self.symbols):
            raise ValueError(f"{self.id}: observation symbols must be non-empty words")


def load_observations(path: str | Path) -> list[Observation]:
    """Read an observation file (corpus format with untagged tokens)."""
    path = Path(path)
    out: list[Observation] = []
    seen: set[str] = set()
    for lineno, fields in iter_data_lines(path):
        where = f"{path}:{lineno}"
        if len(fields) != 5:
            raise CorpusFormatError(f"{where}: expected 5 tab-separated fields, got {len(fields)}")
        obs_id, speaker, batch, dur_text, symbol_text = fields
        if obs_id in seen:
            raise CorpusFormatError(f"{where}: duplicate observation id {obs_id!r}")
        seen.add(obs_id)
        try:
            duration = 0.0 if dur_text == "-" else float(dur_text)
            symbols = tuple(s for s in symbol_text.split(" ") if s) if symbol_text != "-" else ()
            out.append(Observation(obs_id, speaker, batch, duration, symbols))
        except ValueError as exc:
            raise CorpusFormatError(f"{where}: {exc}") from None
    return out


def save_observations(observations: Iterable[Observation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obs in observations:
            symbols = " ".join(obs.symbols) if obs.symbols else "-"
            fh.write("\t".join([obs.id, obs.speaker, obs.batch, repr(obs.duration), symbols]) + "\n")


@dataclass(frozen=True)
class DecodeResult:
    hypothesis: tuple[TaggedToken, ...]
    confidence: float  # best-path log score (channel + LM) per observed symbol
    language_label: frozenset[LanguageTag]


class Recognizer:
    """Immutable bundle of language set, n-gram LM, channel, and tagged lexicon.

    Decoding runs exact Viterbi over a linear lattice whose per-position
    candidates are the `candidates` lexicon entries nearest the observed
    symbol; score ties prefer the lexicographically smaller hypothesis.
    """

    def __init__(
        self,
        languages: Iterable[LanguageTag],
        lm: WittenBellLM,
        channel: ChannelModel,
        lexicon: Vocabulary,
        candidates: int = 5,
    ):
        self.languages = frozenset(languages)
        if not self.languages:
            raise LabError("recognizer needs at least one language")
        if not lexicon.words <= lm.vocab.words:
            raise LabError("language model vocabulary must cover the lexicon")
        if candidates < 1:
            raise LabError("candidate count must be at least 1")
        self.lm = lm
        self.channel = channel
        self.lexicon = lexicon
        self.candidates = candidates
        self._by_length = _length_buckets(lexicon.words)
        self._cand_cache: dict[str, tuple[str, ...]] = {}
        self._tag_cache: dict[str, TaggedToken] = {}

    def _candidates_for(self, observed: str) -> tuple[str, ...]:
        cached = self._cand_cache.get(observed)
        if cached is None:
            m = min(self.candidates, len(self.lexicon.words))
            cached = tuple(nearest_words(observed, self._by_length, m))
            self._cand_cache[observed] = cached
        return cached

    def _token_for(self, surface: str) -> TaggedToken:
        tok = self._tag_cache.get(surface)
        if tok is None:
            tags = self.lexicon.tags_of(surface)
            if not tags:
                raise LabError(f"lexicon entry {surface!r} carries no language tag")
            tok = TaggedToken(surface, tags[0])
            self._tag_cache[surface] = tok
        return tok

    def decode(self, observation: Observation) -> DecodeResult:
        """Exact Viterbi decode; deterministic for identical inputs."""
        symbols = observation.symbols
        if not symbols:
            raise LabError(f"{observation.id}: cannot decode an empty observation")
        lm = self.lm
        span = lm.order - 1
        start: tuple[str, ...] = (BOS,) * span if lm.boundaries else ()
        # state -> (score, hypothesis prefix); ties keep the smaller prefix.
        beam: dict[tuple[str, ...], tuple[float, tuple[str, ...]]] = {start: (0.0, ())}
        for symbol in symbols:
            cands = self._candidates_for(symbol)
            emis = [(w, self.channel.emission_logp(w, symbol)) for w in cands]
            grown: dict[tuple[str, ...], tuple[float, tuple[str, ...]]] = {}
            for state, (score, prefix) in beam.items():
                for word, e in emis:
                    s = score + e + lm.logp(state, word)
                    nxt = (state + (word,))[-span:] if span else ()
                    hyp = prefix + (word,)
                    cur = grown.get(nxt)
                    if cur is None or s > cur[0] or (s == cur[0] and hyp < cur[1]):
                        grown[nxt] = (s, hyp)
            beam = grown
        best_score = None
        best_hyp: tuple[str, ...] | None = None
        for state, (score, prefix) in beam.items():
            total = score + (lm.logp(state, EOS) if lm.boundaries else 0.0)
            if (
                best_score is None
                or total > best_score
                or (total == best_score and prefix < best_hyp)
            ):
                best_score, best_hyp = total, prefix
        assert best_hyp is not None and best_score is not None
        tokens = tuple(self._token_for(w) for w in best_hyp)
        return DecodeResult(
            hypothesis=tokens,
            confidence=best_score / len(symbols),
            language_label=frozenset(t.lang for t in tokens),
        )


def decode_many(
    recognizer: Recognizer, observations: Sequence[Observation], jobs: int = 1
) -> list[DecodeResult]:
    """Decode a batch; results are in input order for any job count."""
    if jobs <= 1 or len(observations) < 2:
        return [recognizer.decode(obs) for obs in observations]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(recognizer.decode, observations))


def train_recognizer(
    pool: Corpus,
    languages: Iterable[LanguageTag],
    channel: ChannelModel,
    observations: Mapping[str, Observation] | None = None,
    order: int = 3,
    candidates: int = 5,
    lexicon: Vocabulary | None = None,
    lm: WittenBellLM | None = None,
) -> Recognizer:
    """Estimate a recognizer from a transcribed pool.

    The language model is trained on the pooled transcriptions unless a fixed
    `lm` is supplied (retraining pipelines keep their baseline model and let
    the channel absorb the new data). By default the lexicon holds exactly the
    pooled words; passing a closed `lexicon` lets the recognizer hypothesize
    words the pool never showed it, with the smoothing carrying their
    probability mass. The channel is re-estimated from (transcript,
    observation) pairs for pool utterances whose observations are supplied,
    and kept at the prior otherwise.
    """
    languages = frozenset(languages)
    utterances = [u for u in pool if u.transcribed]
    if not utterances:
        raise LabError("cannot train a recognizer on an empty pool")
    for u in utterances:
        outside = u.languages - languages
        if outside:
            raise LabError(
                f"{u.id}: token language {sorted(t.value for t in outside)} "
                f"outside the recognizer's language set"
            )
    if lexicon is None:
        lexicon = Vocabulary.from_tagged(tok for u in utterances for tok in u.tokens)
    if lm is None:
        lm = train_ngram([u.surfaces() for u in utterances], lexicon, order=order)
    if observations:
        pairs = [
            (u.surfaces(), observations[u.id].symbols)
            for u in utterances
            if u.id in observations
        ]
        channel = channel.reestimate(pairs)
    return Recognizer(languages, lm, channel, lexicon, candidates=candidates)
