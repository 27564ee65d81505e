"""End-to-end classification and fill-mask evaluation.

Records are independent: each one renders to a prompt, gets a mask
distribution, and is scored against the verbalizer. Per-record failures
(empty text, missing entity, oversized prompts) never abort a run; they
are collected next to the successful predictions. Set the
``CLOZECAST_THREADS`` environment variable above 1 to fan records out to
a thread pool; collection stays order-preserving either way.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .backend import Backend, TokenSequence
from .calibration import CalibrationState
from .errors import EmptyBatch, EngineError, WordNotFound
from .fileio import FillMaskExample, LabeledExample
from .template import Template
from .tokenizer import Tokenizer, _split_chunks
from .verbalizer import ResolvedVerbalizer

THREADS_ENV = "CLOZECAST_THREADS"


@dataclass(frozen=True)
class PromptInstance:
    seq: TokenSequence
    mask_index: int
    source_id: str


@dataclass(frozen=True)
class Prediction:
    id: str
    predicted: str
    scores: dict[str, float]  # class id -> final (calibrated) log score
    calibration_mode: str


@dataclass(frozen=True)
class RecordError:
    index: int
    record_id: str
    reason: str


@dataclass(frozen=True)
class ClassifyResult:
    predictions: tuple[Prediction, ...]
    failures: tuple[RecordError, ...]


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)


def _ordered_map(fn, items):
    """Map preserving input order, threaded when configured."""
    items = list(items)
    workers = _thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def classify(
    dataset,
    template: Template,
    verbalizer: ResolvedVerbalizer,
    backend: Backend,
    calibration: CalibrationState | None,
    tokenizer: Tokenizer,
) -> ClassifyResult:
    """One prediction per record, order-preserving; failures collected."""
    mode = calibration.mode if calibration is not None else "identity"

    def work(item: tuple[int, LabeledExample]):
        index, record = item
        try:
            prompt = template.render(tokenizer, record.text, entity=record.entity)
            instance = PromptInstance(
                seq=TokenSequence.from_ids(prompt.ids, tokenizer.vocab.mask_id),
                mask_index=prompt.mask_position,
                source_id=record.id,
            )
            dist = backend.predict_mask(instance.seq, instance.mask_index)
            best, scores = verbalizer.predict_index(dist.logprobs, calibration)
            return Prediction(
                id=record.id,
                predicted=verbalizer.class_ids[best],
                scores={
                    cid: float(s) for cid, s in zip(verbalizer.class_ids, scores)
                },
                calibration_mode=mode,
            )
        except Exception as exc:
            return RecordError(index=index, record_id=record.id, reason=str(exc))

    results = _ordered_map(work, enumerate(dataset))
    predictions = tuple(r for r in results if isinstance(r, Prediction))
    failures = tuple(r for r in results if isinstance(r, RecordError))
    return ClassifyResult(predictions=predictions, failures=failures)


@dataclass(frozen=True)
class FillMaskReport:
    hit_rates: dict[int, float]  # k -> fraction of scored records hit
    evaluated: int
    ranks: tuple[tuple[str, int], ...]  # (record id, 1-based gold rank)
    skipped: tuple[RecordError, ...]


def _mask_word_in_text(
    record: FillMaskExample, tokenizer: Tokenizer
) -> tuple[tuple[int, ...], int, int]:
    """(ids, mask position, gold token id) for the first occurrence."""
    vocab = tokenizer.vocab
    gold_ids = tokenizer.text_ids(record.masked_word)
    if len(gold_ids) != 1 or gold_ids[0] == vocab.unk_id:
        raise EngineError(
            f"masked_word {record.masked_word!r} is not a single vocabulary piece"
        )

    def norm(s: str) -> str:
        return s.lower() if vocab.lowercase else s

    target = norm(record.masked_word)
    ids: list[int] = []
    found: tuple[int, int] | None = None  # (offset, width)
    for chunk, _ in _split_chunks(record.text):
        chunk_ids = tokenizer.chunk_ids(chunk)
        if found is None and norm(chunk) == target:
            found = (len(ids), len(chunk_ids))
        ids.extend(chunk_ids)
    if found is None:
        raise WordNotFound(
            f"masked_word {record.masked_word!r} does not occur in the text"
        )
    offset, width = found
    masked = ids[:offset] + [vocab.mask_id] + ids[offset + width :]
    budget = vocab.max_len - tokenizer.scaffold_len
    if offset >= budget:
        raise EngineError("masked_word occurrence lies beyond the truncation limit")
    masked = masked[:budget]
    wrapped, shift = tokenizer.wrap_scaffold(masked)
    return tuple(wrapped), offset + shift, gold_ids[0]


def fillmask_topk(
    dataset,
    backend: Backend,
    tokenizer: Tokenizer,
    k_values,
) -> FillMaskReport:
    """Top-k hit rate of gold words at their masked positions.

    Records whose gold word is not a single vocabulary piece (or does not
    occur in the text) are skipped and reported; rates are over the
    scored records. Ranks order by (probability desc, token id asc).
    """
    ks = sorted({int(k) for k in k_values})
    if not ks or ks[0] < 1:
        raise ValueError("k values must be positive integers")

    def work(item: tuple[int, FillMaskExample]):
        index, record = item
        try:
            ids, position, gold = _mask_word_in_text(record, tokenizer)
            dist = backend.logprobs_at(list(ids), position)
            return (record.id, dist.rank_of(gold))
        except Exception as exc:
            return RecordError(index=index, record_id=record.id, reason=str(exc))

    results = _ordered_map(work, enumerate(dataset))
    ranks = tuple(r for r in results if not isinstance(r, RecordError))
    skipped = tuple(r for r in results if isinstance(r, RecordError))
    if not ranks:
        raise EmptyBatch("no scorable fill-mask records")
    hit_rates = {
        k: sum(1 for _, rank in ranks if rank <= k) / len(ranks) for k in ks
    }
    return FillMaskReport(
        hit_rates=hit_rates, evaluated=len(ranks), ranks=ranks, skipped=skipped
    )
