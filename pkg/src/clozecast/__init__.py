"""Zero-shot text classification with masked-language-model cloze prompts."""

from .backend import (
    Backend,
    Bundle,
    MaskDistribution,
    OnnxBackend,
    TokenSequence,
    ToyBackend,
    load_bundle,
    validate_bundle,
)
from .calibration import IDENTITY, CalibrationState, fit_batch, fit_contextual
from .errors import EngineError
from .fileio import FillMaskExample, LabeledExample
from .kv import KVBuildResult, MiningConfig, build_kv
from .metrics import EvalReport, evaluate, render_table
from .pipeline import ClassifyResult, Prediction, classify, fillmask_topk
from .pll import CorpusPLL, PLLResult, pll_corpus, pll_sentence
from .template import DOC_TEMPLATE, ENTITY_TEMPLATE, Template
from .tokenizer import Tokenization, Tokenizer
from .verbalizer import (
    ResolvedVerbalizer,
    VerbalizerConfig,
    ablate,
    base_verbalizer,
    load_verbalizer,
    parse_verbalizer,
    resolve,
)
from .fileio import package_version
from .vocab import VocabInfo, load_vocab

__version__ = package_version()

__all__ = [
    "Backend",
    "Bundle",
    "CalibrationState",
    "ClassifyResult",
    "CorpusPLL",
    "DOC_TEMPLATE",
    "ENTITY_TEMPLATE",
    "EngineError",
    "EvalReport",
    "FillMaskExample",
    "IDENTITY",
    "KVBuildResult",
    "LabeledExample",
    "MaskDistribution",
    "MiningConfig",
    "OnnxBackend",
    "PLLResult",
    "Prediction",
    "ResolvedVerbalizer",
    "Template",
    "Tokenization",
    "TokenSequence",
    "Tokenizer",
    "ToyBackend",
    "VerbalizerConfig",
    "VocabInfo",
    "ablate",
    "base_verbalizer",
    "build_kv",
    "classify",
    "evaluate",
    "fillmask_topk",
    "fit_batch",
    "fit_contextual",
    "load_bundle",
    "load_verbalizer",
    "load_vocab",
    "parse_verbalizer",
    "pll_corpus",
    "pll_sentence",
    "render_table",
    "resolve",
    "validate_bundle",
]
