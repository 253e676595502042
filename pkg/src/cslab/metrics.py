"""Recognition scoring: alignment, mixed and per-language WER, and switch-bigram accuracy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import LanguageTag, TaggedToken
from .errors import LabError

MATCH = "match"
SUBSTITUTION = "substitution"
DELETION = "deletion"
INSERTION = "insertion"


@dataclass(frozen=True, slots=True)
class EditOp:
    kind: str
    ref_idx: int | None = None
    hyp_idx: int | None = None


@dataclass(frozen=True)
class Alignment:
    """Minimum-edit-distance alignment; ops cover both sequences in order."""

    ops: tuple[EditOp, ...]

    @property
    def distance(self) -> int:
        return sum(1 for op in self.ops if op.kind != MATCH)

    def counts(self) -> tuple[int, int, int]:
        s = sum(1 for op in self.ops if op.kind == SUBSTITUTION)
        d = sum(1 for op in self.ops if op.kind == DELETION)
        i = sum(1 for op in self.ops if op.kind == INSERTION)
        return s, d, i

    def matched_ref_indices(self) -> frozenset[int]:
        return frozenset(op.ref_idx for op in self.ops if op.kind == MATCH)


def _surface(token) -> str:
    return token.surface if isinstance(token, TaggedToken) else token


def align(ref: Sequence, hyp: Sequence) -> Alignment:
    """Levenshtein alignment with unit costs over token surfaces.

    Language tags are ignored for matching. The backtrace tie-break prefers
    match, then substitution, then deletion, then insertion, which makes the
    alignment deterministic.
    """
    r = [_surface(t) for t in ref]
    h = [_surface(t) for t in hyp]
    R, H = len(r), len(h)
    dist = [[0] * (H + 1) for _ in range(R + 1)]
    for i in range(1, R + 1):
        dist[i][0] = i
    for j in range(1, H + 1):
        dist[0][j] = j
    for i in range(1, R + 1):
        row = dist[i]
        prev = dist[i - 1]
        ri = r[i - 1]
        for j in range(1, H + 1):
            if ri == h[j - 1]:
                row[j] = prev[j - 1]
            else:
                row[j] = 1 + min(prev[j - 1], prev[j], row[j - 1])
    ops: list[EditOp] = []
    i, j = R, H
    while i > 0 or j > 0:
        if i > 0 and j > 0 and r[i - 1] == h[j - 1] and dist[i][j] == dist[i - 1][j - 1]:
            ops.append(EditOp(MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + 1:
            ops.append(EditOp(SUBSTITUTION, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            ops.append(EditOp(DELETION, i - 1, None))
            i -= 1
        else:
            ops.append(EditOp(INSERTION, None, j - 1))
            j -= 1
    ops.reverse()
    return Alignment(tuple(ops))


def wer(ref: Sequence, hyp: Sequence) -> float:
    """(substitutions + deletions + insertions) / reference length."""
    if not ref:
        raise LabError("word error rate is undefined for an empty reference")
    return align(ref, hyp).distance / len(ref)


@dataclass(frozen=True)
class ErrorCounts:
    sub: int = 0
    dele: int = 0
    ins: int = 0
    ref_len: int = 0

    def __add__(self, other: "ErrorCounts") -> "ErrorCounts":
        return ErrorCounts(
            self.sub + other.sub,
            self.dele + other.dele,
            self.ins + other.ins,
            self.ref_len + other.ref_len,
        )

    @property
    def errors(self) -> int:
        return self.sub + self.dele + self.ins

    @property
    def rate(self) -> float:
        return self.errors / self.ref_len

    def to_dict(self) -> dict:
        return {"sub": self.sub, "del": self.dele, "ins": self.ins, "ref_len": self.ref_len}


@dataclass(frozen=True)
class EvalReport:
    """Pooled recognition scores over a set of (reference, hypothesis) pairs."""

    mixed_wer: float
    wer_by_language: Mapping[LanguageTag, float]
    csba: float | None
    counts: ErrorCounts
    counts_by_language: Mapping[LanguageTag, ErrorCounts]
    switch_bigrams: int = 0
    switch_bigrams_correct: int = 0

    def to_dict(self) -> dict:
        return {
            "mixed_wer": self.mixed_wer,
            "wer_by_language": {
                tag.value: rate
                for tag, rate in sorted(self.wer_by_language.items(), key=lambda kv: kv[0].value)
            },
            "csba": self.csba,
            "counts": self.counts.to_dict(),
            "counts_by_language": {
                tag.value: c.to_dict()
                for tag, c in sorted(self.counts_by_language.items(), key=lambda kv: kv[0].value)
            },
            "switch_bigrams": self.switch_bigrams,
            "switch_bigrams_correct": self.switch_bigrams_correct,
        }

    def format_table(self) -> str:
        lines = [f"mixed WER : {100 * self.mixed_wer:6.2f}%  "
                 f"(S={self.counts.sub} D={self.counts.dele} I={self.counts.ins} "
                 f"N={self.counts.ref_len})"]
        for tag, rate in sorted(self.wer_by_language.items(), key=lambda kv: kv[0].value):
            lines.append(f"WER {tag.value}     : {100 * rate:6.2f}%")
        if self.csba is None:
            lines.append("CSBA      :      -  (no switch bigrams)")
        else:
            lines.append(
                f"CSBA      : {100 * self.csba:6.2f}%  "
                f"({self.switch_bigrams_correct}/{self.switch_bigrams})"
            )
        return "\n".join(lines)


def _language_counts(ref: Sequence, alignment: Alignment) -> dict[LanguageTag, ErrorCounts]:
    """Attribute errors to languages of the reference tokens.

    Substitutions and deletions go to the reference token's language; an
    insertion goes to the language of the nearest preceding reference token,
    or of the following one when it occurs before any reference token.
    """
    if not ref or not isinstance(ref[0], TaggedToken):
        return {}
    out: dict[LanguageTag, ErrorCounts] = {}

    def add(lang: LanguageTag, **kw) -> None:
        out[lang] = out.get(lang, ErrorCounts()) + ErrorCounts(**kw)

    for tok in ref:
        add(tok.lang, ref_len=1)
    last_ref: int | None = None
    for op in alignment.ops:
        if op.kind == MATCH:
            last_ref = op.ref_idx
        elif op.kind == SUBSTITUTION:
            add(ref[op.ref_idx].lang, sub=1)
            last_ref = op.ref_idx
        elif op.kind == DELETION:
            add(ref[op.ref_idx].lang, dele=1)
            last_ref = op.ref_idx
        else:
            anchor = last_ref if last_ref is not None else 0
            add(ref[anchor].lang, ins=1)
    return out


def _switch_bigrams(ref: Sequence, alignment: Alignment) -> tuple[int, int]:
    if not ref or not isinstance(ref[0], TaggedToken):
        return 0, 0
    matched = alignment.matched_ref_indices()
    total = correct = 0
    for i in range(len(ref) - 1):
        if ref[i].lang is ref[i + 1].lang:
            continue
        total += 1
        if i in matched and i + 1 in matched:
            correct += 1
    return total, correct


def language_specific_wer(
    pairs: Iterable[tuple[Sequence, Sequence]]
) -> dict[LanguageTag, float]:
    """Per-language error rates over tagged-reference pairs."""
    pooled: dict[LanguageTag, ErrorCounts] = {}
    for ref, hyp in pairs:
        for lang, counts in _language_counts(ref, align(ref, hyp)).items():
            pooled[lang] = pooled.get(lang, ErrorCounts()) + counts
    return {lang: c.rate for lang, c in pooled.items() if c.ref_len > 0}


def csba(pairs: Iterable[tuple[Sequence, Sequence]]) -> float | None:
    """Fraction of cross-language reference bigrams whose both words are matched.

    None when the references contain no switch bigrams at all.
    """
    total = correct = 0
    for ref, hyp in pairs:
        t, c = _switch_bigrams(ref, align(ref, hyp))
        total += t
        correct += c
    return correct / total if total else None


def corpus_wer(pairs: Sequence[tuple[Sequence, Sequence]]) -> EvalReport:
    """Pool error counts over all pairs before dividing (not a mean of rates)."""
    counts = ErrorCounts()
    by_lang: dict[LanguageTag, ErrorCounts] = {}
    total_sw = correct_sw = 0
    for ref, hyp in pairs:
        alignment = align(ref, hyp)
        s, d, i = alignment.counts()
        counts = counts + ErrorCounts(sub=s, dele=d, ins=i, ref_len=len(ref))
        for lang, c in _language_counts(ref, alignment).items():
            by_lang[lang] = by_lang.get(lang, ErrorCounts()) + c
        t, c = _switch_bigrams(ref, alignment)
        total_sw += t
        correct_sw += c
    if counts.ref_len == 0:
        raise LabError("cannot compute WER without any reference tokens")
    return EvalReport(
        mixed_wer=counts.rate,
        wer_by_language={lang: c.rate for lang, c in by_lang.items() if c.ref_len > 0},
        csba=correct_sw / total_sw if total_sw else None,
        counts=counts,
        counts_by_language=by_lang,
        switch_bigrams=total_sw,
        switch_bigrams_correct=correct_sw,
    )


def merge_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Pool already-computed reports; counts are associative."""
    counts = ErrorCounts()
    by_lang: dict[LanguageTag, ErrorCounts] = {}
    total_sw = correct_sw = 0
    for rep in reports:
        counts = counts + rep.counts
        for lang, c in rep.counts_by_language.items():
            by_lang[lang] = by_lang.get(lang, ErrorCounts()) + c
        total_sw += rep.switch_bigrams
        correct_sw += rep.switch_bigrams_correct
    if counts.ref_len == 0:
        raise LabError("cannot merge reports without any reference tokens")
    return EvalReport(
        mixed_wer=counts.rate,
        wer_by_language={lang: c.rate for lang, c in by_lang.items() if c.ref_len > 0},
        csba=correct_sw / total_sw if total_sw else None,
        counts=counts,
        counts_by_language=by_lang,
        switch_bigrams=total_sw,
        switch_bigrams_correct=correct_sw,
    )
