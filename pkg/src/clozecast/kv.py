"""Automatic label-word mining for knowledgeable verbalizers.

The procedure, given a labeled corpus and per-class seed words:

1. find every seed occurrence inside texts of its own class and mask it;
2. ask the model for top fillers at each masked slot, tally them per
   class, and keep the top entries after dropping stopwords, structural
   tokens, and words tallied for more than one class (the class
   vocabulary, CV);
3. keep only the occurrences whose fillers overlap their class CV enough
   (informative occurrences), and re-tally fillers over the survivors;
4. refine the surviving candidates: discard multi-piece words, drop words
   whose calibrated probability over probe prompts falls below a
   threshold (default: the median), drop words that do not score strictly
   highest for their own class, and pack the rest as a verbalizer.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .backend import Backend
from .errors import ConfigInvalid, EmptyClassAfterResolution
from .template import Template
from .tokenizer import Tokenizer, _split_chunks
from .verbalizer import VerbalizerConfig, parse_verbalizer


@dataclass(frozen=True)
class MiningConfig:
    synonyms: dict[str, tuple[str, ...]]  # class id -> extra seed surfaces
    stopwords: frozenset[str] = frozenset()
    candidates_per_occurrence: int = 50
    cv_size: int = 100
    info_threshold: int = 20
    freq_threshold: float | None = None  # None -> median over all candidates

    def __post_init__(self):
        if not self.synonyms:
            raise ConfigInvalid("mining needs at least one class with seeds")
        object.__setattr__(
            self,
            "synonyms",
            {str(k): tuple(str(s) for s in v) for k, v in self.synonyms.items()},
        )
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))
        if self.cv_size <= 0:
            raise ConfigInvalid("cv_size must be positive")
        if not 0 < self.info_threshold <= self.candidates_per_occurrence:
            raise ConfigInvalid(
                "info_threshold must be in (0, candidates_per_occurrence]"
            )
        if self.freq_threshold is not None and self.freq_threshold < 0:
            raise ConfigInvalid("freq_threshold must be nonnegative")

    @property
    def class_ids(self) -> list[str]:
        return list(self.synonyms)

    def seeds_for(self, class_id: str) -> list[str]:
        """Class name itself plus the configured synonyms/variants."""
        return [class_id, *self.synonyms[class_id]]


@dataclass(frozen=True)
class Occurrence:
    """One seed occurrence, masked in place within its own text."""

    class_id: str
    record_id: str
    ids: tuple[int, ...]
    position: int
    seed: str


@dataclass(frozen=True)
class MiningResult:
    hits: tuple[Occurrence, ...]
    no_occurrence_classes: tuple[str, ...]  # warning-level, classes may end empty
    counts: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ClassVocabulary:
    class_id: str
    entries: tuple[tuple[str, int], ...]  # (surface, filler count), count desc

    @property
    def surfaces(self) -> list[str]:
        return [s for s, _ in self.entries]


def find_occurrences(records, tokenizer: Tokenizer, cfg: MiningConfig) -> MiningResult:
    """Mask each own-class seed occurrence; skip occurrences lost to truncation."""
    vocab = tokenizer.vocab
    budget = vocab.max_len - tokenizer.scaffold_len

    def norm(s: str) -> str:
        return s.lower() if vocab.lowercase else s

    seed_sets = {
        cid: {norm(s) for s in cfg.seeds_for(cid)} for cid in cfg.class_ids
    }
    hits: list[Occurrence] = []
    counts = {cid: 0 for cid in cfg.class_ids}
    for record in records:
        label = getattr(record, "label", None)
        if label is None or label not in seed_sets:
            continue
        spans: list[tuple[str, int, int]] = []  # chunk, id offset, id count
        ids: list[int] = []
        for chunk, _ in _split_chunks(record.text):
            chunk_ids = tokenizer.chunk_ids(chunk)
            spans.append((chunk, len(ids), len(chunk_ids)))
            ids.extend(chunk_ids)
        for chunk, start, width in spans:
            if norm(chunk) not in seed_sets[label]:
                continue
            masked = ids[:start] + [vocab.mask_id] + ids[start + width :]
            if start >= budget:
                continue  # occurrence would be truncated away
            masked = masked[:budget]
            wrapped, shift = tokenizer.wrap_scaffold(masked)
            hits.append(
                Occurrence(
                    class_id=label,
                    record_id=str(getattr(record, "id", "")),
                    ids=tuple(wrapped),
                    position=start + shift,
                    seed=chunk,
                )
            )
            counts[label] += 1
    missing = tuple(cid for cid in cfg.class_ids if counts[cid] == 0)
    return MiningResult(hits=tuple(hits), no_occurrence_classes=missing, counts=counts)


def top_fillers(hit: Occurrence, backend: Backend, cfg: MiningConfig) -> list[str]:
    """Surfaces of the model's top fillers at the masked slot."""
    dist = backend.logprobs_at(list(hit.ids), hit.position)
    return [
        backend.vocab.surface_of(tid)
        for tid, _ in dist.top_k(cfg.candidates_per_occurrence)
    ]


def _all_fillers(hits, backend, cfg, fillers) -> list[list[str]]:
    if fillers is None:
        return [top_fillers(h, backend, cfg) for h in hits]
    fillers = list(fillers)
    if len(fillers) != len(hits):
        raise ConfigInvalid("precomputed fillers do not align with hits")
    return fillers


def _structural_surfaces(vocab) -> set[str]:
    return {vocab.surface_of(tid) for tid in vocab.special_ids()}


def build_cv(
    hits, backend: Backend, cfg: MiningConfig, fillers=None
) -> dict[str, ClassVocabulary]:
    """Per-class top fillers after stopword, structural, and cross-class removal.

    A surface tallied for two or more classes is excluded from every
    class. Ranking ties break lexicographically for determinism.
    """
    hits = list(hits)
    fillers = _all_fillers(hits, backend, cfg, fillers)
    tallies: dict[str, Counter] = {}
    for hit, filler_list in zip(hits, fillers):
        tallies.setdefault(hit.class_id, Counter()).update(filler_list)
    drop = set(cfg.stopwords) | _structural_surfaces(backend.vocab)
    class_presence = Counter()
    for tally in tallies.values():
        for surface in tally:
            if surface not in drop:
                class_presence[surface] += 1
    out: dict[str, ClassVocabulary] = {}
    for cid, tally in tallies.items():
        eligible = [
            (surface, count)
            for surface, count in tally.items()
            if surface not in drop and class_presence[surface] == 1
        ]
        eligible.sort(key=lambda item: (-item[1], item[0]))
        out[cid] = ClassVocabulary(class_id=cid, entries=tuple(eligible[: cfg.cv_size]))
    return out


def filter_informative(
    hits, cv: dict[str, ClassVocabulary], backend: Backend, cfg: MiningConfig, fillers=None
) -> tuple[tuple[Occurrence, ...], list[list[str]]]:
    """Keep occurrences whose fillers overlap their class CV enough.

    Returns the surviving hits and their (aligned) filler lists so later
    stages need not re-query the model.
    """
    hits = list(hits)
    fillers = _all_fillers(hits, backend, cfg, fillers)
    cv_sets = {cid: set(v.surfaces) for cid, v in cv.items()}
    survivors: list[Occurrence] = []
    surviving_fillers: list[list[str]] = []
    for hit, filler_list in zip(hits, fillers):
        in_cv = sum(1 for f in filler_list if f in cv_sets.get(hit.class_id, ()))
        if in_cv >= cfg.info_threshold:
            survivors.append(hit)
            surviving_fillers.append(filler_list)
    return tuple(survivors), surviving_fillers


def refine(
    kb: dict[str, list[str]],
    backend: Backend,
    probe_prompts: dict[str, list[tuple[tuple[int, ...], int]]],
    cfg: MiningConfig,
    tokenizer: Tokenizer,
    content_free_logprobs,
    base_words: dict[str, list[str]] | None = None,
) -> tuple[VerbalizerConfig, tuple[str, ...]]:
    """Refine candidates and pack the final verbalizer.

    In order: discard multi-piece candidates; keep candidates whose mean
    calibrated probability over all probe prompts reaches the frequency
    threshold (default: the median over candidates); keep candidates whose
    own-class mean strictly beats every other class's mean. A class left
    empty falls back to ``base_words`` when given (and is reported),
    otherwise the error is raised.
    """
    if not kb and not base_words:
        raise EmptyClassAfterResolution("no candidate words for any class")
    cc = np.asarray(content_free_logprobs, dtype=np.float64)
    vocab = tokenizer.vocab

    # Sub-token discard, binding surviving candidates to vocabulary ids.
    candidates: dict[str, list[tuple[str, int]]] = {}
    for cid, surfaces in kb.items():
        kept: list[tuple[str, int]] = []
        for surface in surfaces:
            ids = tokenizer.text_ids(surface)
            if len(ids) == 1 and ids[0] != vocab.unk_id:
                kept.append((surface, ids[0]))
        candidates[cid] = kept

    # Probe distributions, calibrated into probability space.
    probe_order = [
        (cid, ids, position)
        for cid, probes in probe_prompts.items()
        for ids, position in probes
    ]
    if not probe_order and any(candidates.values()):
        raise ConfigInvalid("refinement needs at least one probe prompt")
    calibrated_rows: list[np.ndarray] = []
    row_class: list[str] = []
    for cid, ids, position in probe_order:
        dist = backend.logprobs_at(list(ids), position)
        calibrated_rows.append(np.exp(dist.logprobs - cc))
        row_class.append(cid)
    matrix = (
        np.vstack(calibrated_rows)
        if calibrated_rows
        else np.zeros((0, vocab.size))
    )

    # Frequency filter: mean calibrated probability over all probes.
    flat: list[tuple[str, str, int]] = [
        (cid, surface, tid)
        for cid, kept in candidates.items()
        for surface, tid in kept
    ]
    freq_kept: set[tuple[str, str]] = set()
    if flat:
        values = np.asarray(
            [matrix[:, tid].mean() for _, _, tid in flat], dtype=np.float64
        )
        threshold = (
            float(np.median(values))
            if cfg.freq_threshold is None
            else cfg.freq_threshold
        )
        for (cid, surface, _), value in zip(flat, values):
            if value >= threshold:
                freq_kept.add((cid, surface))

    # Relevance filter: own-class mean strictly dominates every other class.
    class_rows = {
        cid: np.asarray([i for i, rc in enumerate(row_class) if rc == cid])
        for cid in set(row_class)
    }

    def class_mean(tid: int, cid: str) -> float | None:
        rows = class_rows.get(cid)
        if rows is None or rows.size == 0:
            return None
        return float(matrix[rows, tid].mean())

    refined: dict[str, list[str]] = {}
    for cid, kept in candidates.items():
        final: list[str] = []
        for surface, tid in kept:
            if (cid, surface) not in freq_kept:
                continue
            own = class_mean(tid, cid)
            if own is None:
                continue
            others = [
                m
                for other in class_rows
                if other != cid
                for m in [class_mean(tid, other)]
                if m is not None
            ]
            if all(own > m for m in others):
                final.append(surface)
        refined[cid] = final

    # Pack, falling back to base words for classes that ended empty.
    class_order = list(base_words) if base_words else list(kb)
    fallback: list[str] = []
    packed = []
    for cid in class_order:
        words = refined.get(cid, [])
        if not words:
            if base_words and base_words.get(cid):
                words = list(base_words[cid])
                fallback.append(cid)
            else:
                raise EmptyClassAfterResolution(
                    f"refinement left class {cid!r} without label words"
                )
        packed.append(
            {
                "id": cid,
                "words": [{"surface": s, "weight": 1.0} for s in words],
            }
        )
    config = parse_verbalizer({"kind": "knowledgeable", "classes": packed})
    return config, tuple(fallback)


@dataclass(frozen=True)
class KVBuildResult:
    verbalizer: VerbalizerConfig
    cv: dict[str, ClassVocabulary]
    kb: dict[str, list[str]]
    hit_counts: dict[str, int]
    survivor_counts: dict[str, int]
    no_occurrence_classes: tuple[str, ...]
    fallback_classes: tuple[str, ...]


def build_kv(
    records,
    template: Template,
    backend: Backend,
    tokenizer: Tokenizer,
    cfg: MiningConfig,
) -> KVBuildResult:
    """Run the full mining procedure over one labeled corpus.

    The same labeled records serve as the mining corpus and, rendered
    through the task template, as the refinement probes.
    """
    records = list(records)
    mining = find_occurrences(records, tokenizer, cfg)
    fillers = _all_fillers(mining.hits, backend, cfg, None)
    cv = build_cv(mining.hits, backend, cfg, fillers)
    survivors, surviving_fillers = filter_informative(
        mining.hits, cv, backend, cfg, fillers
    )
    kb_cv = build_cv(survivors, backend, cfg, surviving_fillers)
    kb = {cid: v.surfaces for cid, v in kb_cv.items() if v.entries}

    probes: dict[str, list[tuple[tuple[int, ...], int]]] = {}
    for record in records:
        label = getattr(record, "label", None)
        if label is None or label not in cfg.synonyms:
            continue
        try:
            prompt = template.render(
                tokenizer, record.text, entity=getattr(record, "entity", None)
            )
        except Exception:
            continue  # unprobeable record; mining already tolerates gaps
        probes.setdefault(label, []).append((prompt.ids, prompt.mask_position))

    cf_prompt = template.render_content_free(tokenizer)
    cf_dist = backend.logprobs_at(list(cf_prompt.ids), cf_prompt.mask_position)

    base_words = {cid: [cid] for cid in cfg.class_ids}
    verbalizer, fallback = refine(
        kb,
        backend,
        probes,
        cfg,
        tokenizer,
        cf_dist.logprobs,
        base_words=base_words,
    )

    survivor_counts = {cid: 0 for cid in cfg.class_ids}
    for hit in survivors:
        survivor_counts[hit.class_id] += 1
    return KVBuildResult(
        verbalizer=verbalizer,
        cv=cv,
        kb=kb,
        hit_counts=mining.counts,
        survivor_counts=survivor_counts,
        no_occurrence_classes=mining.no_occurrence_classes,
        fallback_classes=fallback,
    )
