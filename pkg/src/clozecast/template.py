"""Cloze prompt templates.

A template is a string with named placeholders: ``{text}`` (the input
document or sentence, the only part eligible for truncation), ``{mask}``
(exactly one; becomes the mask token id directly, never tokenized from its
surface), and optionally ``{entity}`` (a short span that must be provided
at render time). Everything else is literal scaffolding whose token budget
is reserved before the text is fitted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import EmptyInput, MissingEntity, SequenceTooLong, TemplateMalformed
from .tokenizer import Tokenizer, _split_chunks

DOC_TEMPLATE = "{text}. Questo documento parla di {mask}."
ENTITY_TEMPLATE = "{text}. In questa frase, {entity} è un esempio di {mask}."

_PLACEHOLDER = re.compile(r"\{(text|mask|entity)\}")


@dataclass(frozen=True)
class RenderedPrompt:
    ids: tuple[int, ...]
    mask_position: int
    text_truncated: bool


@dataclass(frozen=True)
class Template:
    source: str
    parts: tuple[tuple[str, str], ...]  # ("lit", raw) | ("text"|"mask"|"entity", "")

    @classmethod
    def parse(cls, source: str) -> "Template":
        parts: list[tuple[str, str]] = []
        pos = 0
        for match in _PLACEHOLDER.finditer(source):
            literal = source[pos : match.start()]
            if literal:
                parts.append(("lit", literal))
            parts.append((match.group(1), ""))
            pos = match.end()
        tail = source[pos:]
        if tail:
            parts.append(("lit", tail))
        stray = [
            raw for kind, raw in parts if kind == "lit" and ("{" in raw or "}" in raw)
        ]
        if stray:
            raise TemplateMalformed(
                f"template has braces outside known placeholders: {stray[0]!r}"
            )
        counts = {
            kind: sum(1 for k, _ in parts if k == kind)
            for kind in ("text", "mask", "entity")
        }
        if counts["mask"] != 1:
            raise TemplateMalformed(
                f"template must hold exactly one {{mask}}, found {counts['mask']}"
            )
        if counts["text"] < 1:
            raise TemplateMalformed("template must hold at least one {text}")
        return cls(source=source, parts=tuple(parts))

    @property
    def needs_entity(self) -> bool:
        return any(kind == "entity" for kind, _ in self.parts)

    def _assemble(
        self, tokenizer: Tokenizer, text_ids: list[int], entity_ids: list[int]
    ) -> tuple[tuple[int, ...], int]:
        body: list[int] = []
        mask_index = -1
        for kind, raw in self.parts:
            if kind == "lit":
                body.extend(tokenizer.text_ids(raw))
            elif kind == "text":
                body.extend(text_ids)
            elif kind == "entity":
                body.extend(entity_ids)
            else:  # mask
                mask_index = len(body)
                body.append(tokenizer.vocab.mask_id)
        wrapped, shift = tokenizer.wrap_scaffold(body)
        return tuple(wrapped), mask_index + shift

    def _fixed_budget(self, tokenizer: Tokenizer, entity_ids: list[int]) -> tuple[int, int]:
        """(tokens used by scaffolding+entity+mask, number of text slots)."""
        text_slots = 0
        fixed = tokenizer.scaffold_len + 1  # CLS/SEP if declared, plus the mask
        for kind, raw in self.parts:
            if kind == "lit":
                fixed += len(tokenizer.text_ids(raw))
            elif kind == "entity":
                fixed += len(entity_ids)
            elif kind == "text":
                text_slots += 1
        return fixed, text_slots

    def render(
        self,
        tokenizer: Tokenizer,
        text: str,
        entity: str | None = None,
        max_len: int | None = None,
    ) -> RenderedPrompt:
        """Tokenize each part separately and fit the text into what remains."""
        if max_len is None:
            max_len = tokenizer.vocab.max_len
        if not _split_chunks(text):
            raise EmptyInput("text is empty after whitespace normalization")
        if self.needs_entity:
            if entity is None or not _split_chunks(entity):
                raise MissingEntity(
                    "template requires an entity but none was provided"
                )
            entity_ids = tokenizer.text_ids(entity)
        else:
            entity_ids = []

        fixed, text_slots = self._fixed_budget(tokenizer, entity_ids)
        available = (max_len - fixed) // text_slots
        if available < 1:
            raise SequenceTooLong(
                f"template scaffolding occupies {fixed} of {max_len} tokens, "
                "leaving no room for the text"
            )
        text_ids = tokenizer.text_ids(text)
        truncated = len(text_ids) > available
        if truncated:
            text_ids = text_ids[:available]
        ids, mask_position = self._assemble(tokenizer, text_ids, entity_ids)
        return RenderedPrompt(ids=ids, mask_position=mask_position, text_truncated=truncated)

    def render_content_free(
        self, tokenizer: Tokenizer, max_len: int | None = None
    ) -> RenderedPrompt:
        """Render with every input slot empty; used for calibration baselines."""
        if max_len is None:
            max_len = tokenizer.vocab.max_len
        fixed, _ = self._fixed_budget(tokenizer, [])
        if fixed > max_len:
            raise SequenceTooLong(
                f"template scaffolding occupies {fixed} of {max_len} tokens"
            )
        ids, mask_position = self._assemble(tokenizer, [], [])
        return RenderedPrompt(ids=ids, mask_position=mask_position, text_truncated=False)
