"""Command-line entry point: one subcommand per pipeline stage.

Every subcommand writes its outputs and a `manifest.json` into the directory
given by `--out` (default: a subdirectory of `$CSLAB_OUT`). Exit codes:
0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .corpus import (
    Corpus,
    LanguageTag,
    SwitchCounts,
    corpus_stats,
    count_switches,
    format_utterance,
    load_corpus,
    save_corpus,
)
from .datagen import (
    generate_corpus,
    load_scenario,
    pair_label,
    parse_pair,
)
from .errors import LabError
from . import augment as augment_mod
from . import lm as lm_mod
from . import metrics as metrics_mod
from . import semisup as semisup_mod
from .recognizer import (
    ChannelModel,
    decode_many,
    load_observations,
    save_observations,
    train_recognizer,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(f"{self.prog}: {message}")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _out_dir(args) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        root = os.environ.get("CSLAB_OUT")
        if not root:
            raise UsageError("--out is required unless CSLAB_OUT is set")
        out = Path(root) / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_manifest(out: Path, args, inputs: list[Path], extra: dict | None = None) -> None:
    config = {
        k: v for k, v in sorted(vars(args).items()) if k not in ("command", "func") and v is not None
    }
    manifest = {
        "command": args.command,
        "config": {k: str(v) for k, v in config.items()},
        "inputs": {str(p): _sha256(p) for p in sorted(set(inputs))},
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    _write_json(out / "manifest.json", manifest)


def _channel_from_args(args, lexicon) -> ChannelModel:
    return ChannelModel(
        lexicon,
        p_correct=args.p_correct,
        fanout=args.fanout,
    )


def _parse_languages(text: str) -> tuple[LanguageTag, ...]:
    return tuple(LanguageTag.parse(code) for code in text.replace(",", "").strip())


# --- subcommand implementations ----------------------------------------------


def cmd_stats(args) -> int:
    out = _out_dir(args)
    corpus = load_corpus(args.corpus)
    stats = corpus_stats(corpus)
    _write_json(out / "stats.json", stats.to_dict())
    table = stats.format_table()
    (out / "stats.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    _write_manifest(out, args, [Path(args.corpus)])
    return 0


def cmd_lm_train(args) -> int:
    out = _out_dir(args)
    corpus = load_corpus(args.text)
    tokens = [tok for u in corpus if u.transcribed for tok in u.tokens]
    inputs = [Path(args.text)]
    for extra in args.vocab_from or []:
        extra_corpus = load_corpus(extra)
        tokens.extend(tok for u in extra_corpus if u.transcribed for tok in u.tokens)
        inputs.append(Path(extra))
    vocab = lm_mod.Vocabulary.from_tagged(tokens)
    model = lm_mod.train_ngram(
        corpus.sentences(), vocab, order=args.order, boundaries=not args.no_boundaries
    )
    lm_mod.save_arpa(model, out / "model.arpa")
    _write_json(
        out / "vocab.json",
        {
            lang.value: sorted(words)
            for lang, words in sorted(vocab.by_language.items(), key=lambda kv: kv[0].value)
        },
    )
    _write_manifest(out, args, inputs)
    print(f"trained order-{args.order} model over {len(vocab)} words -> {out / 'model.arpa'}")
    return 0


def cmd_lm_ppl(args) -> int:
    out = _out_dir(args)
    model = lm_mod.load_arpa(args.lm)
    corpus = load_corpus(args.text)
    if args.decompose:
        report = lm_mod.decomposed_perplexity(model, corpus)
        _write_json(out / "perplexity.json", report.to_dict())
        table = report.format_table()
    else:
        ppl = lm_mod.perplexity(model, corpus.sentences())
        _write_json(out / "perplexity.json", {"ppl": ppl})
        table = f"perplexity: {ppl:.4f}"
    (out / "perplexity.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    _write_manifest(out, args, [Path(args.lm), Path(args.text)])
    return 0


def cmd_lm_interp(args) -> int:
    out = _out_dir(args)
    lm1 = lm_mod.load_arpa(args.lm1)
    lm2 = lm_mod.load_arpa(args.lm2)
    inputs = [Path(args.lm1), Path(args.lm2)]
    if args.dev:
        dev = load_corpus(args.dev).sentences()
        search = lm_mod.optimize_weight(lm1, lm2, dev)
        weight, dev_ppl = search.weight, search.dev_ppl
        inputs.append(Path(args.dev))
    elif args.weight is not None:
        weight, dev_ppl = args.weight, None
    else:
        raise UsageError("lm-interp needs either --weight or --dev")
    payload = {
        "type": "interpolation",
        "components": [str(Path(args.lm1)), str(Path(args.lm2))],
        "weight": weight,
        "dev_ppl": dev_ppl,
    }
    _write_json(out / "mixture.json", payload)
    print(f"weight={weight:.2f}" + (f" dev_ppl={dev_ppl:.4f}" if dev_ppl else ""))
    _write_manifest(out, args, inputs)
    return 0


def cmd_decode(args) -> int:
    out = _out_dir(args)
    pool = load_corpus(args.train)
    languages = _parse_languages(args.languages)
    observations = load_observations(args.obs)
    lexicon = sorted({tok.surface for u in pool if u.transcribed for tok in u.tokens})
    channel = _channel_from_args(args, lexicon)
    recognizer = train_recognizer(
        pool, languages, channel, order=args.order, candidates=args.candidates
    )
    results = decode_many(recognizer, observations, jobs=args.jobs)
    from .corpus import Status, Utterance

    hyps = Corpus(
        Utterance(o.id, o.speaker, o.batch, o.duration, r.hypothesis, Status.AUTO, "decode")
        for o, r in zip(observations, results)
    )
    save_corpus(hyps, out / "hyps.corpus")
    _write_json(
        out / "decode.json",
        {
            o.id: {
                "confidence": r.confidence,
                "languages": sorted(t.value for t in r.language_label),
            }
            for o, r in zip(observations, results)
        },
    )
    _write_manifest(out, args, [Path(args.train), Path(args.obs)])
    print(f"decoded {len(observations)} observations -> {out / 'hyps.corpus'}")
    return 0


def cmd_transcribe(args) -> int:
    out = _out_dir(args)
    pool = load_corpus(args.train)
    observations = load_observations(args.obs)
    lexicon = sorted({tok.surface for u in pool if u.transcribed for tok in u.tokens})
    channel = _channel_from_args(args, lexicon)
    if args.mode == semisup_mod.FIVE_LINGUAL:
        recognizer = train_recognizer(
            pool, tuple(LanguageTag), channel, order=args.order, candidates=args.candidates
        )
        ts = semisup_mod.transcribe_five_lingual(
            recognizer, observations, system=args.system, jobs=args.jobs,
            min_confidence=args.min_confidence,
        )
    else:
        recognizers = {}
        for label in args.pairs.split(","):
            pair = parse_pair(label.strip())
            restricted = pool.restrict_languages(pair)
            recognizers[label.strip()] = train_recognizer(
                restricted, pair, channel, order=args.order, candidates=args.candidates
            )
        ts = semisup_mod.transcribe_parallel_bilingual(
            recognizers, observations, system=args.system, jobs=args.jobs,
            min_confidence=args.min_confidence,
        )
    save_corpus(Corpus(ts.utterances), out / "transcripts.corpus")
    _write_json(out / "segments.json", ts.counts_dict())
    _write_manifest(out, args, [Path(args.train), Path(args.obs)])
    print(f"transcribed {len(ts.utterances)} segments -> {out / 'transcripts.corpus'}")
    return 0


def cmd_run_system(args) -> int:
    out = _out_dir(args)
    config_path = Path(args.config)
    if config_path.is_file():
        config = semisup_mod.parse_system_config(config_path)
        config_inputs = [config_path]
    else:
        config = semisup_mod.standard_config(args.config)
        config_inputs = []
    spec = load_scenario(args.scenario, seed_override=args.seed)
    data = generate_corpus(spec)
    experiment = semisup_mod.Experiment(
        data, candidates=args.candidates, lm_order=args.order, jobs=args.jobs
    )
    report = experiment.run(config)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    table = report.format_table()
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    _write_manifest(
        out, args, [Path(args.scenario), *config_inputs], extra={"seed": spec.seed}
    )
    return 0


def cmd_augment_text(args) -> int:
    out = _out_dir(args)
    corpus = load_corpus(args.train)
    vocab = lm_mod.Vocabulary.from_corpus(corpus)
    generator = augment_mod.train_generator(
        corpus.sentences(), vocab, seed=args.seed, order=args.order,
        temperature=args.temperature,
    )
    token_text = {w: f"{w}_{vocab.tags_of(w)[0].value}" for w in vocab.words}
    started = time.perf_counter()
    n_tokens = 0
    n_sentences = 0
    with open(out / "generated.corpus", "w", encoding="utf-8") as fh:
        for sentence in generator.stream_surfaces(args.n):
            fh.write(
                f"gen_{n_sentences:08d}\tgen\tGEN\t-\t"
                + " ".join(token_text[w] for w in sentence)
                + "\n"
            )
            n_tokens += len(sentence)
            n_sentences += 1
    elapsed = time.perf_counter() - started
    stats = {
        "tokens": n_tokens,
        "sentences": n_sentences,
        "seconds": round(elapsed, 3),
        "tokens_per_second": round(n_tokens / elapsed, 1) if elapsed else None,
    }
    _write_json(out / "generation.json", stats)
    _write_manifest(out, args, [Path(args.train)])
    print(f"generated {n_tokens} tokens in {elapsed:.1f}s -> {out / 'generated.corpus'}")
    return 0


def cmd_synth_trigrams(args) -> int:
    out = _out_dir(args)
    corpus = load_corpus(args.corpus)
    by_lang: dict[LanguageTag, list[list[str]]] = {}
    for u in corpus:
        if not u.transcribed:
            continue
        run: list[str] = []
        run_lang = None
        for tok in u.tokens:
            if tok.lang is not run_lang and run:
                by_lang.setdefault(run_lang, []).append(run)
                run = []
            run_lang = tok.lang
            run.append(tok.surface)
        if run:
            by_lang.setdefault(run_lang, []).append(run)
    lms = {}
    for lang, sentences in by_lang.items():
        words = {w for sent in sentences for w in sent}
        lms[lang] = lm_mod.train_ngram(sentences, lm_mod.Vocabulary(words), order=2)
    switches = SwitchCounts()
    for u in corpus:
        if u.transcribed:
            switches = switches + count_switches(u)
    trigrams = augment_mod.synthesize_cs_trigrams(lms, switches, args.n, seed=args.seed)
    with open(out / "trigrams.corpus", "w", encoding="utf-8") as fh:
        for idx, tri in enumerate(trigrams):
            tokens = " ".join(str(t) for t in tri.tokens)
            for rep in range(tri.multiplicity):
                fh.write(f"syn_{idx:07d}_{rep:04d}\tsyn\tSYN\t-\t{tokens}\n")
    _write_json(
        out / "synthesis.json",
        {
            "requested": args.n,
            "unique_trigrams": len(trigrams),
            "eb_share_source": {"eb": switches.eb, "be": switches.be},
        },
    )
    _write_manifest(out, args, [Path(args.corpus)])
    print(f"synthesized {args.n} trigram samples ({len(trigrams)} unique)")
    return 0


def cmd_datagen(args) -> int:
    out = _out_dir(args)
    spec = load_scenario(args.scenario, seed_override=args.seed)
    data = generate_corpus(spec)
    for batch, payload in data.batches.items():
        save_corpus(payload.truth, out / f"{batch}.truth.corpus")
        save_observations(payload.observations, out / f"{batch}.obs")
    for split_name, split in (("dev", data.dev), ("test", data.test)):
        for label, eval_set in split.items():
            save_corpus(eval_set.truth, out / f"{split_name}_{label}.truth.corpus")
            save_observations(eval_set.observations, out / f"{split_name}_{label}.obs")
    _write_json(
        out / "lexicons.json",
        {lang.value: list(words) for lang, words in sorted(
            data.lexicons.items(), key=lambda kv: kv[0].value)},
    )
    _write_manifest(out, args, [Path(args.scenario)], extra={"seed": spec.seed})
    print(f"scenario written to {out}")
    return 0


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    refs = load_corpus(args.ref)
    hyps = load_corpus(args.hyp)
    pairs = []
    for ref in refs:
        if not ref.transcribed:
            continue
        try:
            hyp = hyps.by_id(ref.id)
        except KeyError:
            raise LabError(f"hypothesis file has no utterance {ref.id!r}") from None
        pairs.append((ref.tokens, hyp.tokens))
    report = metrics_mod.corpus_wer(pairs)
    _write_json(out / "eval.json", report.to_dict())
    table = report.format_table()
    (out / "eval.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    _write_manifest(out, args, [Path(args.ref), Path(args.hyp)])
    return 0


# --- argument wiring ----------------------------------------------------------


def _add_out(p: _Parser) -> None:
    p.add_argument("--out", help="output directory (default: $CSLAB_OUT/<command>)")


def _add_channel(p: _Parser) -> None:
    p.add_argument("--p-correct", type=float, default=0.9,
                   help="channel probability of emitting the true word")
    p.add_argument("--fanout", type=int, default=4,
                   help="confusion neighbours per true word")


def _add_decoder(p: _Parser) -> None:
    p.add_argument("--order", type=int, default=3, help="language model order (1..3)")
    p.add_argument("--candidates", type=int, default=5,
                   help="lexicon candidates per observed symbol")
    p.add_argument("--jobs", type=int, default=1,
                   help="decode threads; output is identical for any value")


def build_parser() -> _Parser:
    parser = _Parser(prog="cslab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"cslab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", parser_class=_Parser,
                       help="descriptive statistics of a corpus file")
    p.add_argument("--corpus", required=True)
    _add_out(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("lm-train", parser_class=_Parser,
                       help="train a Witten-Bell n-gram model, save as ARPA")
    p.add_argument("--text", required=True, help="training corpus file")
    p.add_argument("--vocab-from", action="append",
                   help="additional corpus whose words close the vocabulary")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--no-boundaries", action="store_true",
                   help="train without sentence padding or end events")
    _add_out(p)
    p.set_defaults(func=cmd_lm_train)

    p = sub.add_parser("lm-ppl", parser_class=_Parser,
                       help="perplexity of a corpus under an ARPA model")
    p.add_argument("--lm", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--decompose", action="store_true",
                   help="split into switch-point and monolingual parts")
    _add_out(p)
    p.set_defaults(func=cmd_lm_ppl)

    p = sub.add_parser("lm-interp", parser_class=_Parser,
                       help="mix two models at a fixed or dev-tuned weight")
    p.add_argument("--lm1", required=True)
    p.add_argument("--lm2", required=True)
    p.add_argument("--weight", type=float)
    p.add_argument("--dev", help="development corpus for weight tuning")
    _add_out(p)
    p.set_defaults(func=cmd_lm_interp)

    p = sub.add_parser("decode", parser_class=_Parser,
                       help="train a recognizer on a pool and decode observations")
    p.add_argument("--train", required=True, help="transcribed pool corpus")
    p.add_argument("--languages", required=True, help="language codes, e.g. EZ")
    p.add_argument("--obs", required=True, help="observation file")
    _add_channel(p)
    _add_decoder(p)
    _add_out(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("transcribe", parser_class=_Parser,
                       help="automatic transcription with pair selection")
    p.add_argument("--mode", choices=[semisup_mod.BILINGUAL, semisup_mod.FIVE_LINGUAL],
                   default=semisup_mod.BILINGUAL)
    p.add_argument("--train", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--system", default="auto", help="provenance label for the output")
    p.add_argument("--pairs", default="EZ,EX,ES,ET")
    p.add_argument("--min-confidence", type=float,
                   help="drop segments scoring below this confidence")
    _add_channel(p)
    _add_decoder(p)
    _add_out(p)
    p.set_defaults(func=cmd_transcribe)

    p = sub.add_parser("run-system", parser_class=_Parser,
                       help="execute a training configuration on a scenario")
    p.add_argument("--config", required=True,
                   help="shipped configuration name (A..L, N) or a config file")
    p.add_argument("--scenario", required=True, help="scenario specification file")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    _add_decoder(p)
    _add_out(p)
    p.set_defaults(func=cmd_run_system)

    p = sub.add_parser("augment-text", parser_class=_Parser,
                       help="sample artificial text from an n-gram generator")
    p.add_argument("--train", required=True, help="corpus the generator is fitted on")
    p.add_argument("--n", type=int, required=True, help="number of tokens to generate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--temperature", type=float, default=1.0)
    _add_out(p)
    p.set_defaults(func=cmd_augment_text)

    p = sub.add_parser("synth-trigrams", parser_class=_Parser,
                       help="synthesize code-switch trigrams from per-language models")
    p.add_argument("--corpus", required=True, help="tagged corpus supplying the models")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_synth_trigrams)

    p = sub.add_parser("datagen", parser_class=_Parser,
                       help="generate a synthetic scenario with ground truth")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, help="override the scenario seed")
    _add_out(p)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("evaluate", parser_class=_Parser,
                       help="score a hypothesis corpus against a reference corpus")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    _add_out(p)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help/--version
        return int(exc.code or 0)
    except (LabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
