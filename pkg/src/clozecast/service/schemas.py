"""Request and response bodies for the HTTP service.

Envelopes are strictly typed; dataset records travel as plain objects so
a malformed record becomes a per-record failure in the response instead
of rejecting the whole request.
"""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, ConfigDict, Field


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# -- bundles ----------------------------------------------------------------

class BundlePath(_Strict):
    path: str


class BundleEntry(_Strict):
    path: str
    kind: str
    vocab_size: int
    max_len: int


class BundleList(_Strict):
    bundles: list[BundleEntry]


class ValidationCheck(_Strict):
    name: str
    ok: bool
    detail: str


class ValidationReport(_Strict):
    ok: bool
    checks: list[ValidationCheck]


# -- classify ---------------------------------------------------------------

class ClassifyRequest(_Strict):
    bundle: str
    records: list[dict[str, Any]]
    task: str = "doc"  # "doc" | "entity"
    template: str | None = None  # pattern; default chosen by task
    verbalizer: dict[str, Any]
    # None/{"mode":"identity"} -> none; {"mode":"contextual"}/{"mode":"batch"}
    # without data keys -> fitted on the fly; a full artifact dict -> loaded.
    calibration: dict[str, Any] | None = None


class PredictionOut(_Strict):
    id: str
    predicted: str
    scores: dict[str, float]


class RecordFailureOut(_Strict):
    index: int | None = None  # position in the posted records
    line: int | None = None  # source file line, when known client-side
    record_id: str | None = None
    reason: str


class ClassifyResponse(_Strict):
    predictions: list[PredictionOut]
    failures: list[RecordFailureOut]
    calibration_mode: str


# -- calibrate ----------------------------------------------------------------

class CalibrateRequest(_Strict):
    bundle: str
    mode: str  # "contextual" | "batch"
    verbalizer: dict[str, Any]
    task: str = "doc"
    template: str | None = None
    content_free: str = ""
    records: list[dict[str, Any]] = Field(default_factory=list)  # batch mode


class CalibrateResponse(_Strict):
    state: dict[str, Any]
    failures: list[RecordFailureOut]


# -- build-kv -----------------------------------------------------------------

class BuildKVRequest(_Strict):
    bundle: str
    records: list[dict[str, Any]]
    seeds: dict[str, list[str]]  # class id -> extra seed surfaces
    stopwords: list[str] = Field(default_factory=list)
    task: str = "doc"
    template: str | None = None
    candidates_per_occurrence: int = 50
    cv_size: int = 100
    info_threshold: int = 20
    freq_threshold: float | None = None


class BuildKVResponse(_Strict):
    verbalizer: dict[str, Any]
    class_vocabularies: dict[str, list[list[Any]]]  # class -> [surface, count]
    kb: dict[str, list[str]]
    hit_counts: dict[str, int]
    survivor_counts: dict[str, int]
    no_occurrence_classes: list[str]
    fallback_classes: list[str]
    failures: list[RecordFailureOut]


# -- pll ----------------------------------------------------------------------

class PLLSentenceIn(_Strict):
    id: str
    text: str


class PLLRequest(_Strict):
    bundle: str
    sentences: list[PLLSentenceIn]


class PLLSentenceOut(_Strict):
    id: str
    raw: float | None = None
    normalized: float | None = None
    tokens: int | None = None
    error: str | None = None


class PLLSummary(_Strict):
    mean: float
    std: float
    std_convention: str  # always "population"
    sentences: int
    failures: int


class PLLResponse(_Strict):
    sentences: list[PLLSentenceOut]
    summary: PLLSummary


# -- fillmask -------------------------------------------------------------------

class FillMaskRequest(_Strict):
    bundle: str
    records: list[dict[str, Any]]
    k: list[int] = Field(default_factory=lambda: [1, 5, 10])


class FillMaskResponse(_Strict):
    hit_rates: dict[str, float]  # str(k) -> rate, JSON-safe keys
    evaluated: int
    ranks: list[RankedRecord]
    skipped: list[RecordFailureOut]


class RankedRecord(_Strict):
    id: str
    rank: int


# -- eval -----------------------------------------------------------------------

class EvalRequest(_Strict):
    pairs: list[tuple[str, str]]  # (record id, predicted class)
    gold: dict[str, str]
    classes: list[str] | None = None
    name: str = "run"


class EvalResponse(_Strict):
    report: dict[str, Any]
    table: str
    csv: str


class HealthResponse(_Strict):
    status: str
    version: str


FillMaskResponse.model_rebuild()
