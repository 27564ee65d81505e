"""Text-to-ids conversion against a bundle vocabulary.

Segmentation is whitespace splitting, punctuation isolation (every
non-alphanumeric, non-space character becomes its own chunk), then greedy
longest-match subword lookup per chunk. A chunk with no full cover maps to
a single unk id. Truncation keeps the head of the text.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EmptyInput
from .vocab import VocabInfo


@dataclass(frozen=True)
class Tokenization:
    ids: tuple[int, ...]
    offsets: tuple[tuple[int, int], ...]  # (start, end) char spans in the input
    truncated: bool

    def __post_init__(self):
        assert len(self.ids) == len(self.offsets)


def _split_chunks(text: str) -> list[tuple[str, int]]:
    """Whitespace words with punctuation chars isolated; returns (chunk, start)."""
    chunks: list[tuple[str, int]] = []
    start = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                chunks.append((text[start:i], start))
                start = None
        elif not ch.isalnum():
            if start is not None:
                chunks.append((text[start:i], start))
                start = None
            chunks.append((ch, i))
        else:
            if start is None:
                start = i
    if start is not None:
        chunks.append((text[start:], start))
    return chunks


class Tokenizer:
    """Stateless given an immutable vocabulary; safe for concurrent use."""

    def __init__(self, vocab: VocabInfo):
        self.vocab = vocab
        self._max_piece_len = max(len(t) for t in vocab.tokens)

    def _match_pieces(self, chunk: str) -> list[tuple[int, int, int]] | None:
        """Greedy longest-match cover of chunk.

        Returns (token_id, start, end) triples relative to the chunk, or
        None when some position cannot be matched at all.
        """
        vocab = self.vocab
        marker = vocab.subtoken_marker
        pieces: list[tuple[int, int, int]] = []
        pos = 0
        n = len(chunk)
        while pos < n:
            end = min(n, pos + self._max_piece_len)
            found = None
            while end > pos:
                sub = chunk[pos:end]
                if pos == 0:
                    tid = vocab.id_of(sub)
                    # continuation entries never start a word
                    if tid is not None and vocab.is_continuation(sub):
                        tid = None
                else:
                    tid = vocab.id_of(marker + sub)
                if tid is not None:
                    found = (tid, pos, end)
                    break
                end -= 1
            if found is None:
                return None
            pieces.append(found)
            pos = found[2]
        return pieces

    def chunk_ids(self, chunk: str) -> list[int]:
        """Ids for a single pre-split chunk; unmatchable chunk -> [unk]."""
        if self.vocab.lowercase:
            chunk = chunk.lower()
        pieces = self._match_pieces(chunk)
        if pieces is None:
            return [self.vocab.unk_id]
        return [tid for tid, _, _ in pieces]

    def text_ids(self, text: str) -> list[int]:
        """Ids for free text without truncation or offsets (template segments)."""
        out: list[int] = []
        for chunk, _ in _split_chunks(text):
            out.extend(self.chunk_ids(chunk))
        return out

    def tokenize(self, text: str, max_len: int | None = None) -> Tokenization:
        """Full tokenization with character offsets and head-keeping truncation."""
        if max_len is None:
            max_len = self.vocab.max_len
        chunks = _split_chunks(text)
        if not chunks:
            raise EmptyInput("text is empty after whitespace normalization")
        ids: list[int] = []
        offsets: list[tuple[int, int]] = []
        for chunk, start in chunks:
            matched = self._match_pieces(chunk.lower() if self.vocab.lowercase else chunk)
            if matched is None:
                ids.append(self.vocab.unk_id)
                offsets.append((start, start + len(chunk)))
            else:
                for tid, s, e in matched:
                    ids.append(tid)
                    offsets.append((start + s, start + e))
        truncated = len(ids) > max_len
        if truncated:
            ids = ids[:max_len]
            offsets = offsets[:max_len]
        return Tokenization(ids=tuple(ids), offsets=tuple(offsets), truncated=truncated)

    def is_single_piece(self, word: str) -> bool:
        """True iff word maps to exactly one vocabulary id that is not unk."""
        if not word:
            raise EmptyInput("word must be non-empty")
        ids = self.text_ids(word)
        return len(ids) == 1 and ids[0] != self.vocab.unk_id

    def detokenize(self, ids) -> str:
        """Human-readable inverse; continuation pieces glue to the previous one."""
        vocab = self.vocab
        marker = vocab.subtoken_marker
        parts: list[str] = []
        for tid in ids:
            surface = vocab.surface_of(tid)
            if marker and surface.startswith(marker) and parts:
                parts[-1] += surface[len(marker):]
            else:
                parts.append(surface)
        return " ".join(parts)

    def wrap_scaffold(self, ids: list[int]) -> tuple[list[int], int]:
        """Add CLS/SEP when the bundle declares them.

        Returns (wrapped ids, index shift applied to content positions).
        """
        shift = 0
        out = list(ids)
        if self.vocab.cls_id is not None:
            out = [self.vocab.cls_id] + out
            shift = 1
        if self.vocab.sep_id is not None:
            out = out + [self.vocab.sep_id]
        return out, shift

    @property
    def scaffold_len(self) -> int:
        return (self.vocab.cls_id is not None) + (self.vocab.sep_id is not None)
