"""cslab: a desk-scale laboratory for code-switched speech recognition experiments.

Synthetic multilingual corpora with ground truth flow through automatic
transcription, batch-wise semi-supervised retraining, code-switch-aware
language modelling, text augmentation, and recognition scoring.
"""

__version__ = "0.1.0"

from .corpus import (
    Corpus,
    LanguageTag,
    Status,
    SwitchCounts,
    TaggedToken,
    Utterance,
    corpus_stats,
    count_switches,
    load_corpus,
    save_corpus,
)
from .errors import LabError
from .lm import (
    Vocabulary,
    decomposed_perplexity,
    interpolate,
    load_arpa,
    optimize_weight,
    perplexity,
    save_arpa,
    train_ngram,
)
from .metrics import Alignment, EvalReport, align, corpus_wer, csba, language_specific_wer, wer
from .recognizer import ChannelModel, Observation, Recognizer, decode_many, train_recognizer
from .datagen import ScenarioData, ScenarioSpec, build_languages, generate_corpus, load_scenario
from .augment import Generator, augment_lm, generate, synthesize_cs_trigrams, train_generator
from .semisup import (
    Experiment,
    SystemConfig,
    TranscriptionSet,
    build_semisup_lm,
    standard_config,
    transcribe_five_lingual,
    transcribe_parallel_bilingual,
)
