"""Pseudo-log-likelihood scoring of sentences and corpora.

The raw score of a sentence is the sum, over its content tokens, of the
log-probability of each true token when that position alone is masked.
Scaffold tokens (CLS/SEP equivalents and padding) are neither masked nor
counted. The normalized score divides by the content token count so
sentences of different lengths stay comparable; corpus reports use the
population standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import Backend
from .errors import AllSentencesFailed, EmptyInput
from .tokenizer import Tokenizer


@dataclass(frozen=True)
class PLLResult:
    raw: float
    normalized: float
    token_count: int

    def __post_init__(self):
        if self.token_count < 1:
            raise EmptyInput("PLL needs at least one scorable token")


def _scaffold_ids(vocab) -> set[int]:
    out = {vocab.pad_id}
    if vocab.cls_id is not None:
        out.add(vocab.cls_id)
    if vocab.sep_id is not None:
        out.add(vocab.sep_id)
    return out


def pll_ids(ids, backend: Backend) -> PLLResult:
    """Score a pre-tokenized sequence, masking one position at a time.

    Accumulation runs left to right over positions so floating-point
    results are reproducible.
    """
    ids = list(ids)
    skip = _scaffold_ids(backend.vocab)
    positions = [i for i, tid in enumerate(ids) if tid not in skip]
    if not positions:
        raise EmptyInput("sequence has no scorable tokens")
    raw = 0.0
    for pos in positions:
        masked = list(ids)
        masked[pos] = backend.vocab.mask_id
        dist = backend.logprobs_at(masked, pos)
        raw += dist.logprob(ids[pos])
    count = len(positions)
    return PLLResult(raw=raw, normalized=raw / count, token_count=count)


def pll_sentence(text: str, backend: Backend, tokenizer: Tokenizer) -> PLLResult:
    """Tokenize a sentence (plus scaffold) and score it."""
    vocab = tokenizer.vocab
    budget = vocab.max_len - tokenizer.scaffold_len
    tokenization = tokenizer.tokenize(text, max_len=budget)
    wrapped, _ = tokenizer.wrap_scaffold(list(tokenization.ids))
    return pll_ids(wrapped, backend)


@dataclass(frozen=True)
class CorpusPLL:
    mean: float  # mean of per-sentence normalized PLL
    std: float  # population standard deviation
    sentence_count: int
    failure_count: int
    results: tuple[PLLResult | None, ...]  # aligned with input order; None = failed
    failures: tuple[tuple[int, str], ...]  # (sentence index, reason)


def pll_corpus(texts, backend: Backend, tokenizer: Tokenizer) -> CorpusPLL:
    """Mean/std of normalized PLL over sentences; failures skipped and counted."""
    results: list[PLLResult | None] = []
    failures: list[tuple[int, str]] = []
    for index, text in enumerate(texts):
        try:
            results.append(pll_sentence(text, backend, tokenizer))
        except Exception as exc:
            results.append(None)
            failures.append((index, str(exc)))
    scored = [r.normalized for r in results if r is not None]
    if not scored:
        raise AllSentencesFailed(
            f"all {len(results)} sentences failed; first failure: "
            f"{failures[0][1] if failures else 'empty corpus'}"
        )
    values = np.asarray(scored, dtype=np.float64)
    return CorpusPLL(
        mean=float(values.mean()),
        std=float(values.std()),  # ddof=0: population convention
        sentence_count=len(scored),
        failure_count=len(failures),
        results=tuple(results),
        failures=tuple(failures),
    )
