"""Label-word verbalizers: mapping classes to vocabulary entries.

A verbalizer config lists, per class, the words whose mask-position
probabilities stand in for that class. Resolution binds each word to a
single vocabulary id (words that segment into several pieces are dropped,
recorded with a reason); scoring aggregates the label-word
log-probabilities into one score per class by weighted arithmetic mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    EmptyClassAfterResolution,
    WordNotFound,
)
from .tokenizer import Tokenizer

KINDS = ("base", "manual", "knowledgeable")


@dataclass(frozen=True)
class Word:
    surface: str
    weight: float = 1.0


@dataclass(frozen=True)
class ClassWords:
    id: str
    words: tuple[Word, ...]


@dataclass(frozen=True)
class VerbalizerConfig:
    kind: str
    classes: tuple[ClassWords, ...]

    @property
    def class_ids(self) -> list[str]:
        return [c.id for c in self.classes]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "classes": [
                {
                    "id": c.id,
                    "words": [
                        {"surface": w.surface, "weight": w.weight} for w in c.words
                    ],
                }
                for c in self.classes
            ],
        }


def _parse_word(raw, where: str) -> Word:
    if not isinstance(raw, dict):
        raise ConfigInvalid(f"{where}: word entry must be an object")
    unknown = set(raw) - {"surface", "weight"}
    if unknown:
        raise ConfigInvalid(f"{where}: word entry has unknown keys {sorted(unknown)}")
    surface = raw.get("surface")
    if not isinstance(surface, str) or not surface.strip():
        raise ConfigInvalid(f"{where}: word surface must be a non-empty string")
    weight = raw.get("weight", 1.0)
    if not isinstance(weight, (int, float)) or isinstance(weight, bool) or weight <= 0:
        raise ConfigInvalid(
            f"{where}: weight for {surface!r} must be a positive number"
        )
    return Word(surface=surface, weight=float(weight))


def parse_verbalizer(data: dict) -> VerbalizerConfig:
    if not isinstance(data, dict):
        raise ConfigInvalid("verbalizer must be a JSON object")
    unknown = set(data) - {"kind", "classes"}
    if unknown:
        raise ConfigInvalid(f"verbalizer has unknown keys {sorted(unknown)}")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigInvalid(f"verbalizer kind must be one of {KINDS}, got {kind!r}")
    raw_classes = data.get("classes")
    if not isinstance(raw_classes, list) or len(raw_classes) < 2:
        raise ConfigInvalid("verbalizer must list at least two classes")
    classes: list[ClassWords] = []
    seen: set[str] = set()
    for i, raw in enumerate(raw_classes):
        where = f"class {i}"
        if not isinstance(raw, dict) or set(raw) - {"id", "words"}:
            raise ConfigInvalid(f"{where}: must be an object with 'id' and 'words'")
        cid = raw.get("id")
        if not isinstance(cid, str) or not cid.strip():
            raise ConfigInvalid(f"{where}: id must be a non-empty string")
        if cid in seen:
            raise ConfigInvalid(f"duplicate class id {cid!r}")
        seen.add(cid)
        raw_words = raw.get("words")
        if not isinstance(raw_words, list) or not raw_words:
            raise ConfigInvalid(f"class {cid!r} must list at least one word")
        words = tuple(_parse_word(w, f"class {cid!r}") for w in raw_words)
        classes.append(ClassWords(id=cid, words=words))
    return VerbalizerConfig(kind=kind, classes=tuple(classes))


def load_verbalizer(path) -> VerbalizerConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read verbalizer {path}: {exc}") from exc
    return parse_verbalizer(data)


def base_verbalizer(class_ids) -> VerbalizerConfig:
    """Each class verbalized by its own name with weight 1."""
    ids = list(class_ids)
    if len(ids) < 2:
        raise ConfigInvalid("need at least two classes")
    return parse_verbalizer(
        {
            "kind": "base",
            "classes": [
                {"id": cid, "words": [{"surface": cid, "weight": 1.0}]}
                for cid in ids
            ],
        }
    )


@dataclass(frozen=True)
class ResolvedClass:
    id: str
    token_ids: tuple[int, ...]
    weights: tuple[float, ...]
    surfaces: tuple[str, ...]


@dataclass(frozen=True)
class ResolvedVerbalizer:
    """Verbalizer bound to one vocabulary; ready to score distributions."""

    kind: str
    classes: tuple[ResolvedClass, ...]
    dropped: tuple[tuple[str, str, str], ...] = field(default=())  # (class, surface, reason)

    @property
    def class_ids(self) -> list[str]:
        return [c.id for c in self.classes]

    @property
    def all_token_ids(self) -> list[int]:
        out: list[int] = []
        for c in self.classes:
            out.extend(c.token_ids)
        return out

    def score_vector(self, logprobs, state=None) -> np.ndarray:
        """Per-class weighted mean of label-word log-probabilities.

        ``state`` is an optional fitted calibration: per-word corrections
        are subtracted before aggregation, per-class means after.
        """
        lp = np.asarray(logprobs, dtype=np.float64)
        if lp.ndim != 1:
            raise DimensionMismatch(f"logprobs must be 1-D, got shape {lp.shape}")
        highest = max(max(c.token_ids) for c in self.classes)
        if highest >= lp.size:
            raise DimensionMismatch(
                f"label-word token id {highest} exceeds distribution size {lp.size}"
            )
        mode = getattr(state, "mode", "identity") if state is not None else "identity"
        scores = np.empty(len(self.classes), dtype=np.float64)
        for i, cls in enumerate(self.classes):
            ids = np.asarray(cls.token_ids)
            weights = np.asarray(cls.weights, dtype=np.float64)
            values = lp[ids]
            if mode == "contextual":
                values = values - np.asarray(
                    [state.word_correction(t) for t in cls.token_ids]
                )
            scores[i] = float(np.sum(weights * values) / np.sum(weights))
        if mode == "batch":
            scores = scores - state.class_means(self.class_ids)
        return scores

    def predict_index(self, logprobs, state=None) -> tuple[int, np.ndarray]:
        """Argmax class index (ties break to the lowest index) plus scores."""
        scores = self.score_vector(logprobs, state)
        return int(np.argmax(scores)), scores


def ablate(
    config: VerbalizerConfig, class_id: str, surfaces
) -> VerbalizerConfig:
    """New config with the named words removed from one class.

    The original config is untouched. Removing a word the class does not
    hold raises WordNotFound; emptying the class raises
    EmptyClassAfterResolution.
    """
    to_remove = list(surfaces)
    if class_id not in config.class_ids:
        raise ConfigInvalid(f"unknown class id {class_id!r}")
    classes: list[ClassWords] = []
    for cls in config.classes:
        if cls.id != class_id:
            classes.append(cls)
            continue
        present = {w.surface for w in cls.words}
        missing = [s for s in to_remove if s not in present]
        if missing:
            raise WordNotFound(
                f"class {class_id!r} has no word(s) {missing}"
            )
        kept = tuple(w for w in cls.words if w.surface not in set(to_remove))
        if not kept:
            raise EmptyClassAfterResolution(
                f"removing {to_remove} would leave class {class_id!r} empty"
            )
        classes.append(ClassWords(id=cls.id, words=kept))
    return VerbalizerConfig(kind=config.kind, classes=tuple(classes))


def resolve(
    config: VerbalizerConfig, tokenizer: Tokenizer
) -> ResolvedVerbalizer:
    """Bind words to single vocabulary ids, dropping multi-piece words."""
    vocab = tokenizer.vocab
    resolved: list[ResolvedClass] = []
    dropped: list[tuple[str, str, str]] = []
    for cls in config.classes:
        token_ids: list[int] = []
        weights: list[float] = []
        surfaces: list[str] = []
        for word in cls.words:
            ids = tokenizer.text_ids(word.surface)
            if len(ids) != 1:
                dropped.append((cls.id, word.surface, "multi-piece"))
                continue
            if ids[0] == vocab.unk_id:
                dropped.append((cls.id, word.surface, "not-in-vocabulary"))
                continue
            token_ids.append(ids[0])
            weights.append(word.weight)
            surfaces.append(word.surface)
        if not token_ids:
            raise EmptyClassAfterResolution(
                f"class {cls.id!r} has no usable label words in this vocabulary"
            )
        resolved.append(
            ResolvedClass(
                id=cls.id,
                token_ids=tuple(token_ids),
                weights=tuple(weights),
                surfaces=tuple(surfaces),
            )
        )
    return ResolvedVerbalizer(
        kind=config.kind, classes=tuple(resolved), dropped=tuple(dropped)
    )
