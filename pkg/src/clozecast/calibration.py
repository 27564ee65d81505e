"""Score calibration.

Two corrections are supported, plus an explicit identity:

* ``contextual`` — the model is run once on the prompt with every input
  slot replaced by a content-free string (empty by default). The resulting
  log-probability of each label word is stored and subtracted from that
  word's observed log-probability *before* class scores are aggregated,
  cancelling the model's prior preference for frequent label words.
* ``batch`` — class scores are computed, uncalibrated, over a batch of
  unlabeled examples; the per-class means are stored and subtracted from
  each example's class scores *after* aggregation, centering every class
  at zero across the batch.

States are persisted as small JSON artifacts so a fitted calibration can
be reused across runs against the same bundle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    EmptyBatch,
    ModeMismatch,
    SchemaMismatch,
)

MODES = ("identity", "contextual", "batch")


@dataclass(frozen=True)
class CalibrationState:
    """Fitted correction terms: per label word (contextual) or per class (batch)."""

    mode: str = "identity"
    # contextual: label-word token id -> content-free log-probability
    cc_logprobs: dict[int, float] | None = None
    # contextual: surfaces for audit output, aligned with cc_logprobs keys
    cc_surfaces: dict[int, str] | None = None
    # batch: class id -> mean raw class score over the fitting batch
    bc_means: dict[str, float] | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ModeMismatch(
                f"calibration mode must be one of {MODES}, got {self.mode!r}"
            )
        if self.mode == "contextual":
            if not self.cc_logprobs:
                raise ModeMismatch("contextual state lacks per-word log-probabilities")
            clean = {int(k): float(v) for k, v in self.cc_logprobs.items()}
            if not all(np.isfinite(v) for v in clean.values()):
                raise ConfigInvalid("contextual corrections must be finite")
            object.__setattr__(self, "cc_logprobs", clean)
        elif self.mode == "batch":
            if not self.bc_means:
                raise ModeMismatch("batch state lacks per-class means")
            clean_means = {str(k): float(v) for k, v in self.bc_means.items()}
            if not all(np.isfinite(v) for v in clean_means.values()):
                raise ConfigInvalid("batch means must be finite")
            object.__setattr__(self, "bc_means", clean_means)

    # -- application -------------------------------------------------------

    def word_correction(self, token_id: int) -> float:
        """Content-free log-probability to subtract for one label word."""
        if self.mode == "identity":
            return 0.0
        if self.mode != "contextual":
            raise ModeMismatch(f"per-word correction undefined for mode {self.mode!r}")
        if token_id not in self.cc_logprobs:
            raise SchemaMismatch(
                f"calibration state has no correction for token id {token_id}; "
                "it was fitted against a different verbalizer"
            )
        return self.cc_logprobs[token_id]

    def class_means(self, class_ids) -> np.ndarray:
        """Batch means aligned to the requested class order."""
        if self.mode == "identity":
            return np.zeros(len(list(class_ids)), dtype=np.float64)
        if self.mode != "batch":
            raise ModeMismatch(f"per-class means undefined for mode {self.mode!r}")
        wanted = list(class_ids)
        missing = [cid for cid in wanted if cid not in self.bc_means]
        extra = sorted(set(self.bc_means) - set(wanted))
        if missing or extra:
            raise SchemaMismatch(
                f"batch calibration classes do not match the verbalizer "
                f"(missing: {missing}, extra: {extra})"
            )
        return np.asarray([self.bc_means[cid] for cid in wanted], dtype=np.float64)

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        if self.mode == "contextual":
            surfaces = self.cc_surfaces or {}
            return {
                "mode": "contextual",
                "words": [
                    {
                        "token_id": tid,
                        "surface": surfaces.get(tid, ""),
                        "logprob": lp,
                    }
                    for tid, lp in sorted(self.cc_logprobs.items())
                ],
            }
        if self.mode == "batch":
            return {
                "mode": "batch",
                "classes": [
                    {"id": cid, "mean": mean}
                    for cid, mean in sorted(self.bc_means.items())
                ],
            }
        return {"mode": "identity"}

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationState":
        if not isinstance(data, dict):
            raise ConfigInvalid("calibration artifact must be a JSON object")
        mode = data.get("mode")
        if mode not in MODES:
            raise ModeMismatch(
                f"calibration mode must be one of {MODES}, got {mode!r}"
            )
        if mode == "identity":
            if set(data) - {"mode"}:
                raise ConfigInvalid("identity artifact must hold only 'mode'")
            return cls(mode="identity")
        if mode == "contextual":
            if set(data) - {"mode", "words"}:
                raise ConfigInvalid("contextual artifact holds unknown keys")
            words = data.get("words")
            if not isinstance(words, list) or not words:
                raise ConfigInvalid("contextual artifact must hold a 'words' list")
            logprobs: dict[int, float] = {}
            surfaces: dict[int, str] = {}
            for entry in words:
                if not isinstance(entry, dict) or set(entry) - {
                    "token_id",
                    "surface",
                    "logprob",
                }:
                    raise ConfigInvalid("malformed word entry in contextual artifact")
                tid = entry.get("token_id")
                lp = entry.get("logprob")
                if not isinstance(tid, int) or not isinstance(lp, (int, float)):
                    raise ConfigInvalid("word entry needs integer token_id and numeric logprob")
                if tid in logprobs:
                    raise ConfigInvalid(f"duplicate token id {tid} in contextual artifact")
                logprobs[tid] = float(lp)
                surfaces[tid] = str(entry.get("surface", ""))
            return cls(mode="contextual", cc_logprobs=logprobs, cc_surfaces=surfaces)
        if set(data) - {"mode", "classes"}:
            raise ConfigInvalid("batch artifact holds unknown keys")
        classes = data.get("classes")
        if not isinstance(classes, list) or not classes:
            raise ConfigInvalid("batch artifact must hold a 'classes' list")
        means: dict[str, float] = {}
        for entry in classes:
            if not isinstance(entry, dict) or set(entry) - {"id", "mean"}:
                raise ConfigInvalid("malformed class entry in batch artifact")
            cid = entry.get("id")
            mean = entry.get("mean")
            if not isinstance(cid, str) or not isinstance(mean, (int, float)):
                raise ConfigInvalid("class entry needs string id and numeric mean")
            if cid in means:
                raise ConfigInvalid(f"duplicate class id {cid!r} in batch artifact")
            means[cid] = float(mean)
        return cls(mode="batch", bc_means=means)

    @classmethod
    def load(cls, path) -> "CalibrationState":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read calibration {path}: {exc}") from exc
        return cls.from_dict(data)


IDENTITY = CalibrationState(mode="identity")


def apply(state: CalibrationState, raw: dict) -> dict:
    """Apply a fitted state to raw scores.

    ``raw`` maps label-word token ids to log-probabilities (contextual
    states, correcting before aggregation) or class ids to aggregated
    scores (batch states, correcting after aggregation). Identity states
    return the input unchanged.
    """
    if state.mode == "identity":
        return dict(raw)
    if not isinstance(raw, dict):
        raise ModeMismatch("apply expects a mapping of ids to scores")
    if state.mode == "contextual":
        return {tid: score - state.word_correction(tid) for tid, score in raw.items()}
    means = state.class_means(list(raw))
    return {cid: score - mean for (cid, score), mean in zip(raw.items(), means)}


def fit_contextual(template, verbalizer, backend, tokenizer, content_free: str = ""):
    """Measure each label word's log-probability on a content-free prompt.

    ``content_free`` defaults to the empty string: only the template
    scaffolding surrounds the mask. A non-empty string fills every input
    slot (text and entity alike).
    """
    if content_free.strip():
        prompt = template.render(
            tokenizer,
            content_free,
            entity=content_free if template.needs_entity else None,
        )
    else:
        prompt = template.render_content_free(tokenizer)
    dist = backend.logprobs_at(list(prompt.ids), prompt.mask_position)
    logprobs: dict[int, float] = {}
    surfaces: dict[int, str] = {}
    for cls in verbalizer.classes:
        for tid, surface in zip(cls.token_ids, cls.surfaces):
            logprobs[tid] = dist.logprob(tid)
            surfaces[tid] = surface
    return CalibrationState(
        mode="contextual", cc_logprobs=logprobs, cc_surfaces=surfaces
    )


def fit_batch_from_scores(score_rows, class_ids) -> CalibrationState:
    """Batch calibration from precomputed raw (uncalibrated) class-score rows."""
    rows = np.asarray(list(score_rows), dtype=np.float64)
    if rows.size == 0:
        raise EmptyBatch("batch calibration needs at least one example")
    if rows.ndim != 2:
        raise DimensionMismatch(
            f"score rows must form a 2-D array, got shape {rows.shape}"
        )
    ids = list(class_ids)
    if rows.shape[1] != len(ids):
        raise DimensionMismatch(
            f"score rows have {rows.shape[1]} columns but {len(ids)} class ids given"
        )
    means = rows.mean(axis=0)
    return CalibrationState(
        mode="batch", bc_means={cid: float(m) for cid, m in zip(ids, means)}
    )


def fit_batch(template, verbalizer, backend, tokenizer, unlabeled) -> CalibrationState:
    """Fit per-class means over unlabeled examples.

    ``unlabeled`` is a list of texts, or of ``(text, entity)`` pairs for
    entity templates.
    """
    rows: list[np.ndarray] = []
    for item in unlabeled:
        text, entity = item if isinstance(item, tuple) else (item, None)
        prompt = template.render(tokenizer, text, entity=entity)
        dist = backend.logprobs_at(list(prompt.ids), prompt.mask_position)
        rows.append(verbalizer.score_vector(dist.logprobs))
    if not rows:
        raise EmptyBatch("batch calibration needs at least one example")
    return fit_batch_from_scores(rows, verbalizer.class_ids)
