"""Language model training, smoothing oracle values, perplexity, and ARPA I/O."""

import math
import random

import pytest

from cslab.corpus import Corpus, LanguageTag, Status, TaggedToken, Utterance
from cslab.errors import LabError
from cslab.lm import (
    BOS,
    EOS,
    ArpaFormatError,
    OOVError,
    Vocabulary,
    VocabularyMismatchError,
    WEIGHT_GRID,
    decomposed_perplexity,
    interpolate,
    load_arpa,
    optimize_weight,
    perplexity,
    save_arpa,
    train_ngram,
)

E, Z = LanguageTag.E, LanguageTag.Z


def random_model(rng, order=3, boundaries=True, vocab_size=5, n_sentences=10):
    words = [f"w{i}" for i in range(vocab_size)]
    vocab = Vocabulary(words)
    sentences = [
        [rng.choice(words) for _ in range(rng.randint(1, 6))] for _ in range(n_sentences)
    ]
    return train_ngram(sentences, vocab, order=order, boundaries=boundaries), sentences, vocab


class TestVocabulary:
    def test_boundary_symbols_excluded(self):
        with pytest.raises(LabError):
            Vocabulary({"a", BOS})

    def test_tags_in_canonical_order(self):
        vocab = Vocabulary({"a"}, {LanguageTag.Z: {"a"}, LanguageTag.E: {"a"}})
        assert vocab.tags_of("a") == (LanguageTag.E, LanguageTag.Z)

    def test_language_sets_must_be_members(self):
        with pytest.raises(LabError):
            Vocabulary({"a"}, {E: {"a", "b"}})


class TestTraining:
    def test_single_symbol_no_boundaries(self):
        vocab = Vocabulary({"a"})
        lm = train_ngram([["a", "a", "a"]], vocab, order=3, boundaries=False)
        assert lm.prob(("a", "a"), "a") == 1.0
        assert perplexity(lm, [["a", "a", "a"]]) == 1.0

    def test_hand_computed_witten_bell_bigrams(self):
        # Events for ["a b", "a c"] with boundaries:
        #   unigrams: a,b,</s>,a,c,</s> -> c(a)=2 c(b)=c(c)=1 c(</s>)=2, N=6, T=4
        #   P0 = 1/4 over {a,b,c,</s>};  P_uni(a) = (2+1)/10, P_uni(b) = (1+1)/10
        #   bigram context a: c(a)=2, T=2 -> P(b|a) = (1 + 2*0.2)/4
        vocab = Vocabulary({"a", "b", "c"})
        lm = train_ngram([["a", "b"], ["a", "c"]], vocab, order=2)
        assert lm.prob((), "a") == pytest.approx(0.3, abs=1e-12)
        assert lm.prob((), "b") == pytest.approx(0.2, abs=1e-12)
        assert lm.prob((), EOS) == pytest.approx(0.3, abs=1e-12)
        assert lm.prob(("a",), "b") == pytest.approx(0.35, abs=1e-12)
        assert lm.prob(("a",), "c") == pytest.approx(0.35, abs=1e-12)
        assert lm.prob(("a",), "a") == pytest.approx(0.15, abs=1e-12)
        assert lm.prob(("a",), EOS) == pytest.approx(0.15, abs=1e-12)

    def test_uniform_counts_give_uniform_probabilities(self):
        words = ["a", "b", "c", "d"]
        vocab = Vocabulary(words)
        lm = train_ngram([[w] * 3 for w in words], vocab, order=1, boundaries=False)
        for w in words:
            assert lm.prob((), w) == pytest.approx(0.25, abs=1e-12)

    def test_oov_reports_token_and_sentence(self):
        vocab = Vocabulary({"a"})
        with pytest.raises(OOVError, match=r"'b'.*sentence 1"):
            train_ngram([["a"], ["a", "b"]], vocab)

    def test_empty_corpus(self):
        with pytest.raises(LabError):
            train_ngram([], Vocabulary({"a"}))
        with pytest.raises(LabError):
            train_ngram([[]], Vocabulary({"a"}), boundaries=False)

    def test_order_bounds(self):
        with pytest.raises(LabError):
            train_ngram([["a"]], Vocabulary({"a"}), order=4)

    def test_normalization_over_random_contexts(self):
        rng = random.Random(17)
        lm, _, vocab = random_model(rng, vocab_size=6, n_sentences=12)
        words = sorted(vocab.words)
        for _ in range(100):
            ctx = tuple(rng.choice(words + [BOS]) for _ in range(rng.randint(0, 2)))
            total = sum(lm.prob(ctx, w) for w in words) + lm.prob(ctx, EOS)
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_replication_preserves_relative_frequencies(self):
        # Replicating every sentence k times scales counts but not type counts,
        # so the maximum-likelihood ratios inside each context are unchanged.
        rng = random.Random(3)
        lm1, sentences, vocab = random_model(rng, vocab_size=4, n_sentences=6)
        lm3 = train_ngram(sentences * 3, vocab, order=3)
        for level in range(1, 4):
            for ctx, word, count in lm1.seen_ngrams(level):
                total1, _ = lm1.context_stats(ctx) if level > 1 else (None, None)
                if level == 1:
                    continue
                total3, _ = lm3.context_stats(ctx)
                succ3 = lm3.successors(ctx)
                assert succ3[word] / total3 == pytest.approx(count / total1, abs=1e-12)
        # and the replicated model still normalizes
        words = sorted(vocab.words)
        for _ in range(20):
            ctx = tuple(rng.choice(words) for _ in range(2))
            total = sum(lm3.prob(ctx, w) for w in words) + lm3.prob(ctx, EOS)
            assert total == pytest.approx(1.0, abs=1e-6)


class TestProb:
    def test_prob_oov_word(self):
        lm = train_ngram([["a"]], Vocabulary({"a"}))
        with pytest.raises(OOVError):
            lm.prob((), "zzz")

    def test_prob_oov_context(self):
        lm = train_ngram([["a"]], Vocabulary({"a"}))
        with pytest.raises(OOVError):
            lm.prob(("zzz",), "a")

    def test_long_context_truncated(self):
        vocab = Vocabulary({"a", "b"})
        lm = train_ngram([["a", "b", "a"]], vocab, order=2)
        assert lm.prob(("a", "b"), "a") == lm.prob(("b",), "a")


class TestPerplexity:
    def test_boundary_mode_hand_values(self):
        # Scoring "a a" under the model of "a a a": the three events are
        # P(a|<s> <s>) = 11/12, P(a|<s> a) = 5/6, P(</s>|a a) = 5/12.
        vocab = Vocabulary({"a"})
        lm = train_ngram([["a", "a", "a"]], vocab, order=3)
        assert lm.prob((BOS, BOS), "a") == pytest.approx(11 / 12, abs=1e-12)
        assert lm.prob((BOS, "a"), "a") == pytest.approx(5 / 6, abs=1e-12)
        assert lm.prob(("a", "a"), EOS) == pytest.approx(5 / 12, abs=1e-12)
        expected = (864 / 275) ** (1 / 3)
        assert perplexity(lm, [["a", "a"]]) == pytest.approx(expected, rel=1e-12)

    def test_uniform_unigram_no_boundaries(self):
        words = [f"w{i}" for i in range(7)]
        vocab = Vocabulary(words)
        lm = train_ngram([words], vocab, order=1, boundaries=False)
        text = [[words[0], words[3]], [words[6]]]
        assert perplexity(lm, text) == pytest.approx(7.0, abs=1e-9)

    def test_matches_direct_prob_summation(self):
        rng = random.Random(23)
        for _ in range(20):
            lm, _, vocab = random_model(
                rng,
                order=rng.randint(1, 3),
                vocab_size=rng.randint(2, 6),
                n_sentences=rng.randint(1, 5),
            )
            words = sorted(vocab.words)
            text = [
                [rng.choice(words) for _ in range(rng.randint(1, 5))]
                for _ in range(rng.randint(1, 4))
            ]
            # independent oracle: walk the text, do the padding by hand
            logs = []
            for sent in text:
                ctx = (BOS,) * (lm.order - 1)
                for w in sent:
                    logs.append(math.log(lm.prob(ctx, w)))
                    ctx = (ctx + (w,))[-(lm.order - 1):] if lm.order > 1 else ()
                logs.append(math.log(lm.prob(ctx, EOS)))
            expected = math.exp(-sum(logs) / len(logs))
            assert perplexity(lm, text) == pytest.approx(expected, rel=1e-9)

    def test_oov_text(self):
        lm = train_ngram([["a"]], Vocabulary({"a"}))
        with pytest.raises(OOVError):
            perplexity(lm, [["a", "q"]])

    def test_empty_text(self):
        lm = train_ngram([["a"]], Vocabulary({"a"}), boundaries=False)
        with pytest.raises(LabError):
            perplexity(lm, [])


class TestInterpolation:
    def test_endpoints(self):
        rng = random.Random(1)
        lm1, _, vocab = random_model(rng)
        lm2, _, _ = random_model(rng)
        words = sorted(vocab.words)
        at1 = interpolate(lm1, lm2, 1.0)
        at0 = interpolate(lm1, lm2, 0.0)
        for _ in range(50):
            ctx = tuple(rng.choice(words) for _ in range(rng.randint(0, 2)))
            w = rng.choice(words + [EOS])
            assert at1.prob(ctx, w) == lm1.prob(ctx, w)
            assert at0.prob(ctx, w) == lm2.prob(ctx, w)

    def test_midpoint_arithmetic(self):
        vocab = Vocabulary({"a", "b"})
        lm1 = train_ngram([["a"], ["b"]], vocab, order=1, boundaries=False)
        lm2 = train_ngram([["a"] * 9 + ["b"]], vocab, order=1, boundaries=False)
        mixed = interpolate(lm1, lm2, 0.5)
        expected = 0.5 * lm1.prob((), "a") + 0.5 * lm2.prob((), "a")
        assert mixed.prob((), "a") == pytest.approx(expected, abs=1e-15)

    def test_mixture_identity_everywhere(self):
        rng = random.Random(2)
        lm1, _, vocab = random_model(rng)
        lm2, _, _ = random_model(rng)
        lam = 0.37
        mixed = interpolate(lm1, lm2, lam)
        words = sorted(vocab.words)
        for _ in range(100):
            ctx = tuple(rng.choice(words) for _ in range(rng.randint(0, 2)))
            w = rng.choice(words + [EOS])
            expected = lam * lm1.prob(ctx, w) + (1 - lam) * lm2.prob(ctx, w)
            assert abs(mixed.prob(ctx, w) - expected) < 1e-9

    def test_vocabulary_mismatch(self):
        lm1 = train_ngram([["a"]], Vocabulary({"a"}))
        lm2 = train_ngram([["b"]], Vocabulary({"b"}))
        with pytest.raises(VocabularyMismatchError):
            interpolate(lm1, lm2, 0.5)

    def test_weight_bounds(self):
        lm = train_ngram([["a"]], Vocabulary({"a"}))
        with pytest.raises(LabError):
            interpolate(lm, lm, 1.5)


class TestOptimizeWeight:
    def test_identical_models_tie_break_to_zero(self):
        lm = train_ngram([["a", "b"]], Vocabulary({"a", "b"}))
        search = optimize_weight(lm, lm, [["a", "b"]])
        assert search.weight == 0.0

    def test_perfect_model_wins(self):
        words = ["a", "b", "c"]
        vocab = Vocabulary(words)
        dev = [["a", "b", "a"], ["a", "b"]]
        exact = train_ngram(dev, vocab, order=1, boundaries=False)
        near_uniform = train_ngram([words], vocab, order=1, boundaries=False)
        search = optimize_weight(exact, near_uniform, dev)
        assert search.weight == 1.0

    def test_matches_brute_force_grid(self):
        rng = random.Random(31)
        for _ in range(10):
            lm1, _, vocab = random_model(rng, vocab_size=4, n_sentences=5)
            lm2, _, _ = random_model(rng, vocab_size=4, n_sentences=5)
            words = sorted(vocab.words)
            dev = [
                [rng.choice(words) for _ in range(rng.randint(1, 5))]
                for _ in range(rng.randint(1, 4))
            ]
            search = optimize_weight(lm1, lm2, dev)
            # independent sweep through the public interpolation path, with
            # the same smallest-weight tie rule
            best = None
            for lam in WEIGHT_GRID:
                ppl = perplexity(interpolate(lm1, lm2, lam), dev)
                if best is None or ppl < best[1] * (1 - 1e-12):
                    best = (lam, ppl)
            assert search.weight == best[0]
            assert search.dev_ppl == best[1]
            assert search.dev_ppl <= perplexity(lm1, dev) + 1e-12
            assert search.dev_ppl <= perplexity(lm2, dev) + 1e-12

    def test_empty_dev(self):
        lm = train_ngram([["a"]], Vocabulary({"a"}))
        with pytest.raises(LabError):
            optimize_weight(lm, lm, [])


def tagged_utt(utt_id, *tokens):
    toks = tuple(TaggedToken(s, LanguageTag(c)) for s, c in tokens)
    return Utterance(utt_id, "spk", "ManT", 1.0, toks, Status.MANUAL)


class TestDecomposedPerplexity:
    def build(self):
        vocab = Vocabulary({"a", "x"}, {E: {"a"}, Z: {"x"}})
        lm = train_ngram([["a", "x", "a"], ["a", "a"]], vocab, order=2)
        return lm, vocab

    def test_monolingual_corpus_has_no_cpp(self):
        lm, _ = self.build()
        corpus = Corpus([tagged_utt("u1", ("a", "E"), ("a", "E"))])
        report = decomposed_perplexity(lm, corpus)
        assert report.cpp_all.tokens == 0 and report.cpp_all.ppl is None
        assert report.mpp_all.tokens == 2
        # MPP equals the overall figure restricted to word events
        logs = [math.log(lm.prob((BOS,), "a")), math.log(lm.prob(("a",), "a"))]
        assert report.mpp_all.ppl == pytest.approx(math.exp(-sum(logs) / 2), rel=1e-12)

    def test_switch_words_routed_by_direction(self):
        lm, _ = self.build()
        corpus = Corpus([tagged_utt("u1", ("a", "E"), ("x", "Z"), ("a", "E"))])
        report = decomposed_perplexity(lm, corpus)
        # `x` after English is the EB event; the final `a` after Bantu is BE.
        lp_x = math.log(lm.prob(("a",), "x"))
        lp_a2 = math.log(lm.prob(("x",), "a"))
        assert report.cpp_eb.tokens == 1
        assert report.cpp_eb.ppl == pytest.approx(math.exp(-lp_x), rel=1e-12)
        assert report.cpp_be.tokens == 1
        assert report.cpp_be.ppl == pytest.approx(math.exp(-lp_a2), rel=1e-12)
        assert report.cpp_all.tokens == 2
        assert report.mpp_all.tokens == 1  # just the opening `a`
        # overall adds the </s> event
        assert report.overall.tokens == 4

    def test_bantu_bantu_enters_cpp_all_only(self):
        vocab = Vocabulary({"x", "s"}, {Z: {"x"}, LanguageTag.S: {"s"}})
        lm = train_ngram([["x", "s"]], vocab, order=2)
        corpus = Corpus([tagged_utt("u1", ("x", "Z"), ("s", "S"))])
        report = decomposed_perplexity(lm, corpus)
        assert report.cpp_all.tokens == 1
        assert report.cpp_eb.tokens == 0
        assert report.cpp_be.tokens == 0

    def test_category_partition(self):
        rng = random.Random(41)
        surfaces = {"E": ["a", "b"], "Z": ["x", "y"], "S": ["s"]}
        vocab = Vocabulary(
            {w for ws in surfaces.values() for w in ws},
            {LanguageTag(c): set(ws) for c, ws in surfaces.items()},
        )
        sentences = []
        utts = []
        for i in range(10):
            toks = []
            for _ in range(rng.randint(1, 7)):
                code = rng.choice(list(surfaces))
                toks.append((rng.choice(surfaces[code]), code))
            sentences.append([s for s, _ in toks])
            utts.append(tagged_utt(f"u{i}", *toks))
        lm = train_ngram(sentences, vocab, order=3)
        corpus = Corpus(utts)
        report = decomposed_perplexity(lm, corpus)
        n_words = sum(len(u.tokens) for u in corpus)
        assert report.cpp_all.tokens + report.mpp_all.tokens == n_words
        assert report.overall.tokens == n_words + len(corpus.utterances)
        by_lang = sum(c.tokens for c in report.mpp_by_language.values())
        assert by_lang == report.mpp_all.tokens

    def test_untranscribed_rejected(self):
        lm, _ = self.build()
        corpus = Corpus([Utterance("u", "s", "B2", 1.0, (), Status.UNTRANSCRIBED)])
        with pytest.raises(LabError):
            decomposed_perplexity(lm, corpus)


class TestArpa:
    def test_round_trip_single_symbol(self, tmp_path):
        vocab = Vocabulary({"a"})
        lm = train_ngram([["a", "a", "a"]], vocab, order=3, boundaries=False)
        path = tmp_path / "m.arpa"
        save_arpa(lm, path)
        loaded = load_arpa(path)
        assert loaded.prob(("a", "a"), "a") == pytest.approx(1.0, abs=1e-9)

    def test_round_trip_preserves_probabilities(self, tmp_path):
        rng = random.Random(7)
        for trial in range(5):
            lm, _, vocab = random_model(
                rng, order=rng.randint(1, 3), vocab_size=rng.randint(2, 6)
            )
            path = tmp_path / f"m{trial}.arpa"
            save_arpa(lm, path)
            loaded = load_arpa(path)
            words = sorted(vocab.words)
            for _ in range(100):
                ctx = tuple(rng.choice(words) for _ in range(rng.randint(0, lm.order - 1)))
                w = rng.choice(words + [EOS])
                assert math.log10(loaded.prob(ctx, w)) == pytest.approx(
                    math.log10(lm.prob(ctx, w)), abs=2e-6
                )

    def test_double_round_trip_is_byte_identical(self, tmp_path):
        rng = random.Random(13)
        lm, _, _ = random_model(rng)
        p1, p2 = tmp_path / "a.arpa", tmp_path / "b.arpa"
        save_arpa(lm, p1)
        save_arpa(load_arpa(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_hand_written_unigram_file(self, tmp_path):
        path = tmp_path / "tiny.arpa"
        path.write_text(
            "\\data\\\n"
            "ngram 1=2\n"
            "\n"
            "\\1-grams:\n"
            "-0.301030\tyes\n"
            "-0.301030\tno\n"
            "\\end\\\n"
        )
        lm = load_arpa(path)
        assert lm.prob((), "yes") == pytest.approx(10 ** -0.301030, rel=1e-9)
        assert lm.prob((), "no") == pytest.approx(10 ** -0.301030, rel=1e-9)

    def test_count_mismatch_names_section(self, tmp_path):
        path = tmp_path / "bad.arpa"
        path.write_text(
            "\\data\\\n"
            "ngram 1=3\n"
            "\n"
            "\\1-grams:\n"
            "-0.301030\tyes\n"
            "-0.301030\tno\n"
            "\\end\\\n"
        )
        with pytest.raises(ArpaFormatError, match="1-grams"):
            load_arpa(path)

    def test_missing_end_marker(self, tmp_path):
        path = tmp_path / "bad.arpa"
        path.write_text("\\data\\\nngram 1=1\n\n\\1-grams:\n-0.5\ta\n")
        with pytest.raises(ArpaFormatError, match="end"):
            load_arpa(path)

    def test_interpolated_models_are_not_serializable(self, tmp_path):
        lm = train_ngram([["a"]], Vocabulary({"a"}))
        mixed = interpolate(lm, lm, 0.5)
        with pytest.raises(LabError):
            save_arpa(mixed, tmp_path / "m.arpa")

    def test_loaded_model_scores_text(self, tmp_path):
        rng = random.Random(19)
        lm, sentences, _ = random_model(rng)
        save_arpa(lm, tmp_path / "m.arpa")
        loaded = load_arpa(tmp_path / "m.arpa")
        assert perplexity(loaded, sentences) == pytest.approx(
            perplexity(lm, sentences), rel=1e-5
        )
