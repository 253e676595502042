"""Alignment, WER variants, and code-switched bigram accuracy."""

import itertools
import random
from functools import lru_cache

import pytest

from cslab.corpus import LanguageTag, TaggedToken
from cslab.errors import LabError
from cslab.metrics import (
    DELETION,
    INSERTION,
    MATCH,
    SUBSTITUTION,
    align,
    corpus_wer,
    csba,
    language_specific_wer,
    merge_reports,
    wer,
)


def brute_force_distance(ref, hyp):
    """Plain recursive edit distance, memoized; the independent oracle."""

    @lru_cache(maxsize=None)
    def rec(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        cost = 0 if ref[i - 1] == hyp[j - 1] else 1
        return min(rec(i - 1, j - 1) + cost, rec(i - 1, j) + 1, rec(i, j - 1) + 1)

    return rec(len(ref), len(hyp))


def tagged(*specs):
    return [TaggedToken(s, LanguageTag(c)) for s, c in specs]


class TestAlign:
    def test_identity(self):
        a = align(["a", "b", "c"], ["a", "b", "c"])
        assert [op.kind for op in a.ops] == [MATCH] * 3
        assert a.distance == 0

    def test_empty_hypothesis(self):
        a = align(["a", "b", "c"], [])
        assert [op.kind for op in a.ops] == [DELETION] * 3
        assert a.distance == 3

    def test_empty_reference(self):
        a = align([], ["a", "b"])
        assert [op.kind for op in a.ops] == [INSERTION] * 2

    def test_mixed_script(self):
        a = align(["a", "b", "c"], ["a", "x", "c", "d"])
        assert [op.kind for op in a.ops] == [MATCH, SUBSTITUTION, MATCH, INSERTION]
        assert a.distance == 2

    def test_tags_ignored_for_matching(self):
        ref = tagged(("a", "E"), ("x", "Z"))
        hyp = tagged(("a", "Z"), ("x", "E"))
        assert align(ref, hyp).distance == 0

    def test_coverage_in_order(self):
        rng = random.Random(3)
        for _ in range(50):
            ref = [rng.choice("abc") for _ in range(rng.randint(0, 7))]
            hyp = [rng.choice("abc") for _ in range(rng.randint(0, 7))]
            a = align(ref, hyp)
            ref_idx = [op.ref_idx for op in a.ops if op.ref_idx is not None]
            hyp_idx = [op.hyp_idx for op in a.ops if op.hyp_idx is not None]
            assert ref_idx == list(range(len(ref)))
            assert hyp_idx == list(range(len(hyp)))
            assert a.distance == brute_force_distance(tuple(ref), tuple(hyp))

    def test_exhaustive_small_alphabet(self):
        # all sequence pairs up to length 4 over {a, b, c}
        seqs = [
            seq
            for n in range(0, 5)
            for seq in itertools.product("abc", repeat=n)
        ]
        for ref in seqs:
            for hyp in seqs:
                assert align(ref, hyp).distance == brute_force_distance(ref, hyp)


class TestWer:
    def test_identity_is_zero(self):
        assert wer(["a", "b"], ["a", "b"]) == 0.0

    def test_empty_hypothesis_is_one(self):
        assert wer(["a", "b", "c"], []) == 1.0

    def test_hand_value(self):
        assert wer(["a", "b", "c"], ["a", "x", "c", "d"]) == pytest.approx(2 / 3)

    def test_empty_reference_rejected(self):
        with pytest.raises(LabError):
            wer([], ["a"])

    def test_rate_can_exceed_one(self):
        assert wer(["a"], ["x", "y", "z"]) > 1.0


class TestCorpusWer:
    def test_pools_counts_not_rates(self):
        # 1/1 on a short pair and 0/9 on a long one: pooled 1/10, not mean 0.5
        pairs = [
            (tagged(("a", "E")), tagged(("x", "E"))),
            (tagged(*[(f"w{i}", "E") for i in range(9)]),
             tagged(*[(f"w{i}", "E") for i in range(9)])),
        ]
        report = corpus_wer(pairs)
        assert report.mixed_wer == pytest.approx(0.1)

    def test_zero_reference_total_rejected(self):
        with pytest.raises(LabError):
            corpus_wer([(tagged(), tagged(("a", "E")))])

    def test_counts_additive_over_partitions(self):
        rng = random.Random(11)
        pairs = []
        for _ in range(12):
            ref = tagged(*[(f"w{rng.randrange(5)}", rng.choice("EZXST"))
                           for _ in range(rng.randint(1, 6))])
            hyp = tagged(*[(f"w{rng.randrange(5)}", rng.choice("EZXST"))
                           for _ in range(rng.randint(0, 6))])
            pairs.append((ref, hyp))
        whole = corpus_wer(pairs)
        merged = merge_reports([corpus_wer(pairs[:5]), corpus_wer(pairs[5:])])
        assert whole == merged

    def test_json_shape(self):
        report = corpus_wer([(tagged(("a", "E"), ("x", "Z")), tagged(("a", "E")))])
        payload = report.to_dict()
        assert set(payload) >= {"mixed_wer", "wer_by_language", "csba", "counts"}
        assert payload["counts"]["ref_len"] == 2
        assert "E" in payload["wer_by_language"]


class TestLanguageSpecificWer:
    def test_monolingual_substitution(self):
        ref = tagged(("a", "E"), ("b", "E"), ("c", "E"), ("d", "E"))
        hyp = tagged(("a", "E"), ("q", "E"), ("c", "E"), ("d", "E"))
        rates = language_specific_wer([(ref, hyp)])
        assert rates == {LanguageTag.E: pytest.approx(0.25)}

    def test_correct_pair_is_zero_for_both(self):
        ref = tagged(("a", "E"), ("x", "Z"))
        rates = language_specific_wer([(ref, ["a", "x"])])
        assert rates[LanguageTag.E] == 0.0
        assert rates[LanguageTag.Z] == 0.0

    def test_substitution_attributed_to_reference_language(self):
        ref = tagged(("a", "E"), ("x", "Z"), ("y", "Z"))
        rates = language_specific_wer([(ref, ["a", "q", "y"])])
        assert rates[LanguageTag.Z] == pytest.approx(0.5)
        assert rates[LanguageTag.E] == 0.0

    def test_insertion_goes_to_preceding_token(self):
        ref = tagged(("a", "E"), ("x", "Z"))
        # hyp inserts after the Z token
        rates = language_specific_wer([(ref, ["a", "x", "q"])])
        assert rates[LanguageTag.Z] == pytest.approx(1.0)  # 1 insertion / 1 ref token
        assert rates[LanguageTag.E] == 0.0

    def test_leading_insertion_goes_to_following_token(self):
        ref = tagged(("a", "E"),)
        rates = language_specific_wer([(ref, ["q", "a"])])
        assert rates[LanguageTag.E] == pytest.approx(1.0)

    def test_deletion_attribution(self):
        ref = tagged(("a", "E"), ("x", "Z"))
        rates = language_specific_wer([(ref, ["a"])])
        assert rates[LanguageTag.Z] == pytest.approx(1.0)
        assert rates[LanguageTag.E] == 0.0


class TestCsba:
    def test_identity_is_full_accuracy(self):
        ref = tagged(("a", "E"), ("x", "Z"), ("b", "E"))
        assert csba([(ref, ["a", "x", "b"])]) == 1.0

    def test_all_switch_words_substituted_is_zero(self):
        ref = tagged(("a", "E"), ("x", "Z"), ("b", "E"))
        assert csba([(ref, ["q", "r", "s"])]) == 0.0

    def test_half_correct(self):
        ref = tagged(("a", "E"), ("x", "Z"), ("a", "E"))
        # bigram (a, x) survives; (x, a) loses its second word
        assert csba([(ref, ["a", "x", "q"])]) == pytest.approx(0.5)

    def test_absent_without_switches(self):
        ref = tagged(("a", "E"), ("b", "E"))
        assert csba([(ref, ["a", "b"])]) is None

    def test_monolingual_region_errors_do_not_matter(self):
        rng = random.Random(7)
        ref = tagged(
            ("m1", "E"), ("m2", "E"), ("m3", "E"),
            ("a", "E"), ("x", "Z"),
            ("n1", "Z"), ("n2", "Z"), ("n3", "Z"),
        )
        base = csba([(ref, [t.surface for t in ref])])
        for _ in range(10):
            hyp = [t.surface for t in ref]
            # corrupt only tokens not adjacent to the switch point (indices 3, 4)
            for idx in (0, 1, 6, 7):
                if rng.random() < 0.7:
                    hyp[idx] = "junk"
            assert csba([(ref, hyp)]) == base

    def test_bantu_bantu_switch_counts(self):
        ref = tagged(("x", "Z"), ("s", "S"))
        assert csba([(ref, ["x", "s"])]) == 1.0
