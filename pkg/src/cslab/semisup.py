"""Transcription systems and batch-wise semi-supervised training plans.

A system configuration names a mode (four parallel bilingual recognizers, one
five-lingual recognizer, or bilingual recognizers fed five-lingual
transcripts), the source of the seed transcriptions for batch B1, and an
ordered plan of (batch, transcriber) retraining steps. The runner executes
plans against a synthetic scenario, caching built systems and transcriptions
so that shared prefixes (for example the baseline used by every plan) are
computed once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import (
    B1,
    BANTU,
    Corpus,
    LanguageTag,
    MANT,
    Status,
    TaggedToken,
    Utterance,
)
from .datagen import PAIR_ORDER, ScenarioData, parse_kv_file, parse_pair
from .errors import LabError
from .lm import WeightSearch, WittenBellLM, interpolate, optimize_weight, train_ngram
from .metrics import EvalReport, corpus_wer, merge_reports
from .recognizer import (
    DecodeResult,
    Observation,
    Recognizer,
    decode_many,
    train_recognizer,
)

BILINGUAL = "bilingual-parallel"
FIVE_LINGUAL = "five-lingual"
BILINGUAL_ON_FIVE = "bilingual-on-five-lingual"

SEED_BILINGUAL = "AutoT_B"
SEED_FIVE_LINGUAL = "AutoT_F"

# Baseline system names implied by each mode's seed transcripts.
_BASELINES = {SEED_BILINGUAL: "A", SEED_FIVE_LINGUAL: "G"}


@dataclass(frozen=True)
class PlanStep:
    """One retraining step: transcribe the listed batches, pool, retrain."""

    produces: str
    assignments: tuple[tuple[str, str], ...]  # (batch, transcriber system)


@dataclass(frozen=True)
class SystemConfig:
    name: str
    mode: str
    seed_transcripts: str
    steps: tuple[PlanStep, ...]
    baseline: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in (BILINGUAL, FIVE_LINGUAL, BILINGUAL_ON_FIVE):
            raise LabError(f"{self.name}: unknown mode {self.mode!r}")
        if self.seed_transcripts not in (SEED_BILINGUAL, SEED_FIVE_LINGUAL):
            raise LabError(f"{self.name}: unknown seed transcripts {self.seed_transcripts!r}")
        if self.mode == BILINGUAL and self.seed_transcripts != SEED_BILINGUAL:
            raise LabError(f"{self.name}: bilingual plans seed from {SEED_BILINGUAL}")
        known = {self.baseline} if self.baseline else set()
        for step in self.steps:
            for batch, transcriber in step.assignments:
                if transcriber not in known and self.mode != BILINGUAL_ON_FIVE:
                    raise LabError(
                        f"{self.name}: step {step.produces!r} references {transcriber!r} "
                        "before it is produced"
                    )
            known.add(step.produces)

    @property
    def evaluated_systems(self) -> tuple[str, ...]:
        names = [self.baseline] if self.baseline else []
        names.extend(step.produces for step in self.steps)
        return tuple(names)


def _parse_system_lines(lines: Iterable[str], where: str) -> SystemConfig:
    values: dict[str, str] = {}
    steps: list[PlanStep] = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise LabError(f"{where}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key != "step":
            values[key] = value
            continue
        produces, sep, rest = value.partition(":")
        if not sep:
            raise LabError(f"{where}:{lineno}: step needs 'NAME : BATCH=SYSTEM'")
        assignments = []
        for part in rest.replace(",", " ").split():
            batch, sep2, transcriber = part.partition("=")
            if not sep2:
                raise LabError(f"{where}:{lineno}: bad assignment {part!r}")
            assignments.append((batch.strip(), transcriber.strip()))
        steps.append(PlanStep(produces.strip(), tuple(assignments)))
    try:
        return SystemConfig(
            name=values["name"],
            mode=values["mode"],
            seed_transcripts=values["seed_transcripts"],
            steps=tuple(steps),
            baseline=values.get("baseline") or None,
        )
    except KeyError as exc:
        raise LabError(f"{where}: missing config key {exc}") from None


def parse_system_config(path: str | Path) -> SystemConfig:
    """Read a key-value system configuration file.

    Schema: `name`, `mode`, `seed_transcripts`, optional `baseline`, and zero
    or more `step = NAME : BATCH=SYSTEM[, BATCH=SYSTEM...]` lines applied in
    file order.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return _parse_system_lines(fh, str(path))


def standard_config(name: str) -> SystemConfig:
    """One of the shipped system configurations (A..L, N)."""
    from importlib.resources import files

    resource = files("cslab").joinpath(f"systems/{name}.cfg")
    if not resource.is_file():
        raise LabError(f"no shipped system configuration named {name!r}")
    text = resource.read_text(encoding="utf-8")
    return _parse_system_lines(text.splitlines(), f"systems/{name}.cfg")


@dataclass(frozen=True)
class TranscriptionSet:
    """Automatic transcriptions of one batch by one system."""

    batch: str
    system: str
    utterances: tuple[Utterance, ...]
    confidences: tuple[float, ...]
    mono_counts: Mapping[LanguageTag, int]
    code_switched: int
    bantu_bantu: int

    def counts_dict(self) -> dict:
        out = {tag.value: self.mono_counts.get(tag, 0) for tag in LanguageTag}
        out["code_switched"] = self.code_switched
        out["bantu_bantu"] = self.bantu_bantu
        return out


def _classify(utterances: Sequence[Utterance]) -> tuple[dict[LanguageTag, int], int, int]:
    mono: dict[LanguageTag, int] = {}
    cs = bb = 0
    for u in utterances:
        langs = u.languages
        if len(langs) == 1:
            (lang,) = langs
            mono[lang] = mono.get(lang, 0) + 1
        else:
            cs += 1
            if len(langs - {LanguageTag.E}) > 1:
                bb += 1
    return mono, cs, bb


def _build_set(
    batch: str,
    system: str,
    picked: Sequence[tuple[Observation, DecodeResult]],
) -> TranscriptionSet:
    utterances = tuple(
        Utterance(
            obs.id,
            obs.speaker,
            obs.batch,
            obs.duration,
            res.hypothesis,
            Status.AUTO,
            provenance=system,
        )
        for obs, res in picked
    )
    mono, cs, bb = _classify(utterances)
    return TranscriptionSet(
        batch=batch,
        system=system,
        utterances=utterances,
        confidences=tuple(res.confidence for _, res in picked),
        mono_counts=mono,
        code_switched=cs,
        bantu_bantu=bb,
    )


def select_best(results: Mapping[str, DecodeResult]) -> tuple[str, DecodeResult]:
    """Highest-confidence result; ties resolved by the fixed pair order."""
    best: tuple[str, DecodeResult] | None = None
    for label in PAIR_ORDER:
        res = results.get(label)
        if res is None:
            continue
        if best is None or res.confidence > best[1].confidence:
            best = (label, res)
    if best is None:
        raise LabError("no decoder results to select from")
    return best


def transcribe_parallel_bilingual(
    recognizers: Mapping[str, Recognizer],
    observations: Sequence[Observation],
    system: str,
    batch: str | None = None,
    min_confidence: float | None = None,
    jobs: int = 1,
) -> TranscriptionSet:
    """Decode each utterance with every pair recognizer and keep the best.

    The winning decode labels the segment with its language pair. An optional
    confidence threshold drops low-scoring segments entirely.
    """
    if not observations:
        raise LabError("empty observation batch")
    unknown = set(recognizers) - set(PAIR_ORDER)
    if unknown or not recognizers:
        raise LabError(f"recognizer map must use pair labels {PAIR_ORDER}")
    per_pair = {
        label: decode_many(rec, observations, jobs) for label, rec in recognizers.items()
    }
    picked: list[tuple[Observation, DecodeResult]] = []
    for idx, obs in enumerate(observations):
        results = {label: per_pair[label][idx] for label in per_pair}
        _, best = select_best(results)
        if min_confidence is not None and best.confidence < min_confidence:
            continue
        picked.append((obs, best))
    return _build_set(batch or observations[0].batch, system, picked)


def transcribe_five_lingual(
    recognizer: Recognizer,
    observations: Sequence[Observation],
    system: str,
    batch: str | None = None,
    min_confidence: float | None = None,
    jobs: int = 1,
) -> TranscriptionSet:
    """Decode each utterance with the single five-lingual recognizer."""
    if not observations:
        raise LabError("empty observation batch")
    picked: list[tuple[Observation, DecodeResult]] = []
    for obs, res in zip(observations, decode_many(recognizer, observations, jobs)):
        if min_confidence is not None and res.confidence < min_confidence:
            continue
        picked.append((obs, res))
    return _build_set(batch or observations[0].batch, system, picked)


def build_semisup_lm(
    baseline: WittenBellLM,
    transcription_sets: Sequence[TranscriptionSet],
    dev: Sequence[Sequence[str]],
) -> tuple[object, WeightSearch]:
    """Interpolate the baseline with a model of the automatic transcriptions.

    The transcript model shares the baseline's closed vocabulary; the mixture
    weight is tuned on the development text.
    """
    texts = [
        u.surfaces()
        for ts in transcription_sets
        for u in ts.utterances
        if u.tokens
    ]
    if not texts:
        raise LabError("no transcription text to train on")
    auto_lm = train_ngram(texts, baseline.vocab, order=baseline.order,
                          boundaries=baseline.boundaries)
    search = optimize_weight(auto_lm, baseline, dev)
    return interpolate(auto_lm, baseline, search.weight), search


# --- experiment runner -------------------------------------------------------


@dataclass(frozen=True)
class PoolSource:
    label: str  # "ManT", "AutoT_B(B1)", "A(B2)", ...
    utterances: int
    dropped: int = 0  # five-lingual transcripts too mixed for any pair

    def to_dict(self) -> dict:
        return {"source": self.label, "utterances": self.utterances, "dropped": self.dropped}


@dataclass(frozen=True)
class SystemState:
    """A trained system plus the bookkeeping needed for reports."""

    name: str
    mode: str
    recognizers: Mapping[str, Recognizer]  # pair label -> recognizer, or {"ALL": ...}
    pool: Corpus
    sources: tuple[PoolSource, ...]

    def manifest(self) -> list[dict]:
        return [s.to_dict() for s in self.sources]


class Experiment:
    """Executes system configurations against one scenario's data."""

    def __init__(self, data: ScenarioData, candidates: int = 5, lm_order: int = 3,
                 jobs: int = 1, retrain_lm: bool = False):
        self.data = data
        self.candidates = candidates
        self.lm_order = lm_order
        self.jobs = jobs
        # Retraining updates the channel (the acoustic stand-in). The language
        # models stay the baseline ones trained on ManT plus the seed
        # transcripts, matching how the recognition results are produced;
        # retrain_lm=True refits them on each step's pool instead.
        self.retrain_lm = retrain_lm
        self._baseline_lms: dict = {}
        self._systems: dict[str, SystemState] = {}
        self._transcripts: dict[tuple[str, str], TranscriptionSet] = {}
        self._lexicons: dict = {}
        self._priors: dict = {}
        self._observations = {
            obs.id: obs
            for batch in data.batches.values()
            for obs in batch.observations
        }
        self._pairs = tuple(label for label in PAIR_ORDER if label in data.spec.pairs)

    # -- training helpers -------------------------------------------------

    def _closed_lexicon(self, languages) -> "Vocabulary":
        # Pronunciation inventories cover the whole word list, so recognizers
        # may hypothesize words their training pool never contained; what the
        # pool size limits is the model estimates, not the vocabulary.
        from .lm import Vocabulary

        key = frozenset(languages)
        cached = self._lexicons.get(key)
        if cached is None:
            cached = Vocabulary(
                set().union(*(set(self.data.lexicons[lang]) for lang in key)),
                {lang: set(self.data.lexicons[lang]) for lang in key},
            )
            self._lexicons[key] = cached
        return cached

    def _channel_prior(self, lexicon) -> "ChannelModel":
        # The recognizer's prior confusion structure is built over its own
        # closed lexicon; the scenario's true channel lives on the union
        # lexicon of all five languages, so the prior is an approximation
        # that per-word re-estimation from pooled pairs gradually corrects.
        from .recognizer import ChannelModel

        key = frozenset(lexicon.words)
        cached = self._priors.get(key)
        if cached is None:
            spec = self.data.spec
            cached = ChannelModel(
                lexicon.words,
                p_correct=spec.p_correct,
                fanout=spec.prior_fanout or spec.fanout,
            )
            self._priors[key] = cached
        return cached

    def _ensure_baseline_lms(self, mode: str, lm_key: str, pool: Corpus) -> None:
        # The per-scope baseline language models are trained on the base pool
        # (ManT plus seed transcripts) and then reused by every retraining
        # step of that mode, so systems differ only in their channels.
        if self.retrain_lm:
            return
        if mode == FIVE_LINGUAL:
            scopes = [(("all", lm_key), pool.filter(lambda u: u.transcribed),
                       self._closed_lexicon(tuple(LanguageTag)))]
        else:
            scopes = []
            for label in self._pairs:
                pair = parse_pair(label)
                scopes.append(
                    (("pair", label, lm_key), pool.restrict_languages(pair),
                     self._closed_lexicon(pair))
                )
        for key, scoped, lexicon in scopes:
            if key not in self._baseline_lms:
                self._baseline_lms[key] = train_ngram(
                    scoped.sentences(), lexicon, order=self.lm_order
                )

    def _pair_recognizer(self, label: str, pool: Corpus, lm_key: str | None) -> Recognizer:
        pair = parse_pair(label)
        restricted = pool.restrict_languages(pair)
        lexicon = self._closed_lexicon(pair)
        lm = None
        if lm_key is not None and not self.retrain_lm:
            lm = self._baseline_lms[("pair", label, lm_key)]
        return train_recognizer(
            restricted,
            pair,
            self._channel_prior(lexicon),
            observations=self._observations,
            order=self.lm_order,
            candidates=self.candidates,
            lexicon=lexicon,
            lm=lm,
        )

    def _train(self, mode: str, pool: Corpus, lm_key: str | None = None) -> Mapping[str, Recognizer]:
        if mode == FIVE_LINGUAL:
            transcribed = pool.filter(lambda u: u.transcribed)
            lexicon = self._closed_lexicon(tuple(LanguageTag))
            lm = None
            if lm_key is not None and not self.retrain_lm:
                lm = self._baseline_lms[("all", lm_key)]
            return {
                "ALL": train_recognizer(
                    transcribed,
                    tuple(LanguageTag),
                    self._channel_prior(lexicon),
                    observations=self._observations,
                    order=self.lm_order,
                    candidates=self.candidates,
                    lexicon=lexicon,
                    lm=lm,
                )
            }
        return {label: self._pair_recognizer(label, pool, lm_key) for label in self._pairs}

    def _pool_with(
        self,
        mode: str,
        base_pool: Corpus,
        sources: tuple[PoolSource, ...],
        ts: TranscriptionSet,
        label: str,
    ) -> tuple[Corpus, tuple[PoolSource, ...]]:
        utterances = list(ts.utterances)
        dropped = 0
        if mode in (BILINGUAL, BILINGUAL_ON_FIVE):
            kept = []
            for u in utterances:
                langs = u.languages
                fits = any(langs <= set(parse_pair(p)) for p in self._pairs)
                if fits:
                    kept.append(u)
                else:
                    dropped += 1
            utterances = kept
        pool = base_pool.concat(Corpus(utterances))
        return pool, sources + (PoolSource(label, len(utterances), dropped),)

    # -- seed transcriptions ----------------------------------------------

    def seed_transcripts(self, kind: str) -> TranscriptionSet:
        """B1 transcribed by a bootstrap system trained on ManT alone."""
        key = (kind, B1)
        cached = self._transcripts.get(key)
        if cached is not None:
            return cached
        b1_obs = self.data.batches[B1].observations
        mant = self.data.mant
        if kind == SEED_BILINGUAL:
            recognizers = self._train(BILINGUAL, mant)
            ts = transcribe_parallel_bilingual(recognizers, b1_obs, system=kind, batch=B1,
                                               jobs=self.jobs)
        elif kind == SEED_FIVE_LINGUAL:
            (recognizer,) = self._train(FIVE_LINGUAL, mant).values()
            ts = transcribe_five_lingual(recognizer, b1_obs, system=kind, batch=B1,
                                         jobs=self.jobs)
        else:
            raise LabError(f"unknown seed transcript kind {kind!r}")
        self._transcripts[key] = ts
        return ts

    # -- systems -----------------------------------------------------------

    def _transcribe_with(self, system_name: str, batch: str) -> TranscriptionSet:
        key = (system_name, batch)
        cached = self._transcripts.get(key)
        if cached is not None:
            return cached
        state = self._resolve_system(system_name)
        observations = self.data.batches[batch].observations
        if state.mode == FIVE_LINGUAL:
            ts = transcribe_five_lingual(
                state.recognizers["ALL"], observations, system=system_name, batch=batch,
                jobs=self.jobs,
            )
        else:
            ts = transcribe_parallel_bilingual(
                state.recognizers, observations, system=system_name, batch=batch,
                jobs=self.jobs,
            )
        self._transcripts[key] = ts
        return ts

    def _resolve_system(self, name: str) -> SystemState:
        state = self._systems.get(name)
        if state is not None:
            return state
        # Standard configurations resolve cross-plan references (e.g. N uses
        # the five-lingual systems G and I).
        config = standard_config(name)
        if config.name != name or not (
            config.baseline == name or (config.steps and config.steps[-1].produces == name)
        ):
            raise LabError(f"configuration {name!r} does not produce system {name!r}")
        self.run(config)
        return self._systems[name]

    def run(self, config: SystemConfig) -> "RunReport":
        """Execute a plan: seed, train the baseline, then transcribe/retrain."""
        seed_ts = self.seed_transcripts(config.seed_transcripts)
        pool = self.data.mant
        sources: tuple[PoolSource, ...] = (PoolSource(MANT, len(pool)),)
        pool, sources = self._pool_with(
            config.mode, pool, sources, seed_ts, f"{config.seed_transcripts}({B1})"
        )
        self._ensure_baseline_lms(config.mode, config.seed_transcripts, pool)
        evaluated: list[SystemState] = []
        if config.baseline:
            state = self._systems.get(config.baseline)
            if state is None:
                state = SystemState(
                    config.baseline, config.mode,
                    self._train(config.mode, pool, config.seed_transcripts), pool, sources,
                )
                self._systems[config.baseline] = state
            evaluated.append(state)
        for step in config.steps:
            for batch, transcriber in step.assignments:
                ts = self._transcribe_with(transcriber, batch)
                pool, sources = self._pool_with(
                    config.mode, pool, sources, ts, f"{transcriber}({batch})"
                )
            state = self._systems.get(step.produces)
            if state is None:
                state = SystemState(
                    step.produces, config.mode,
                    self._train(config.mode, pool, config.seed_transcripts), pool, sources,
                )
                self._systems[step.produces] = state
            evaluated.append(state)
        return RunReport(
            config=config,
            seed=self.data.spec.seed,
            systems={state.name: self._evaluate(state) for state in evaluated},
        )

    # -- evaluation ---------------------------------------------------------

    def _evaluate(self, state: SystemState) -> "SystemReport":
        per_split: dict[str, dict[str, EvalReport]] = {}
        for split_name, sets in (("dev", self.data.dev), ("test", self.data.test)):
            split: dict[str, EvalReport] = {}
            for label in self._pairs:
                eval_set = sets[label]
                recognizer = (
                    state.recognizers["ALL"]
                    if state.mode == FIVE_LINGUAL
                    else state.recognizers[label]
                )
                results = decode_many(recognizer, eval_set.observations, self.jobs)
                pairs = []
                for obs, res in zip(eval_set.observations, results):
                    truth = eval_set.truth.by_id(obs.id)
                    pairs.append((truth.tokens, res.hypothesis))
                split[label] = corpus_wer(pairs)
            split["overall"] = merge_reports([split[label] for label in self._pairs])
            per_split[split_name] = split
        return SystemReport(
            name=state.name,
            mode=state.mode,
            pool_manifest=tuple(state.sources),
            dev=per_split["dev"],
            test=per_split["test"],
        )


@dataclass(frozen=True)
class SystemReport:
    name: str
    mode: str
    pool_manifest: tuple[PoolSource, ...]
    dev: Mapping[str, EvalReport]
    test: Mapping[str, EvalReport]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode,
            "pool_manifest": [s.to_dict() for s in self.pool_manifest],
            "dev": {label: rep.to_dict() for label, rep in sorted(self.dev.items())},
            "test": {label: rep.to_dict() for label, rep in sorted(self.test.items())},
        }


@dataclass(frozen=True)
class RunReport:
    config: SystemConfig
    seed: int
    systems: Mapping[str, "SystemReport"]
    lm_weights: Mapping[str, float] | None = None

    def to_dict(self) -> dict:
        return {
            "config": {
                "name": self.config.name,
                "mode": self.config.mode,
                "seed_transcripts": self.config.seed_transcripts,
                "baseline": self.config.baseline,
                "steps": [
                    {"produces": s.produces, "assignments": list(map(list, s.assignments))}
                    for s in self.config.steps
                ],
            },
            "seed": self.seed,
            "systems": {name: rep.to_dict() for name, rep in sorted(self.systems.items())},
            "lm_weights": dict(self.lm_weights) if self.lm_weights else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def format_table(self) -> str:
        lines = [f"configuration {self.config.name} ({self.config.mode})"]
        header = f"{'system':<8}" + "".join(f"{label:>10}" for label in PAIR_ORDER) + f"{'overall':>10}"
        for split in ("dev", "test"):
            lines.append(f"-- {split} WER (%)")
            lines.append(header)
            for name, rep in sorted(self.systems.items()):
                table = rep.dev if split == "dev" else rep.test
                cells = []
                for label in PAIR_ORDER:
                    cell = table.get(label)
                    cells.append(f"{100 * cell.mixed_wer:>10.1f}" if cell else f"{'-':>10}")
                overall = table.get("overall")
                cells.append(f"{100 * overall.mixed_wer:>10.1f}" if overall else f"{'-':>10}")
                lines.append(f"{name:<8}" + "".join(cells))
        return "\n".join(lines)
