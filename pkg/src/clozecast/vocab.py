"""Vocabulary metadata for a model bundle.

A bundle's vocabulary is `vocab.txt` (one token per line, line number = id)
plus `meta.json` carrying the special-token ids and tokenizer conventions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BundleInvalid

DEFAULT_MAX_LEN = 512


@dataclass(frozen=True)
class VocabInfo:
    """Immutable vocabulary table plus special-token conventions.

    subtoken_marker is the prefix that identifies continuation pieces
    (e.g. "##"); empty string disables subword continuation entirely.
    cls_id/sep_id are optional scaffold tokens wrapped around real-model
    inputs; toy bundles normally leave them unset.
    """

    tokens: tuple[str, ...]
    mask_id: int
    pad_id: int
    unk_id: int
    subtoken_marker: str = "##"
    max_len: int = DEFAULT_MAX_LEN
    cls_id: int | None = None
    sep_id: int | None = None
    lowercase: bool = False
    _ids: dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        size = len(self.tokens)
        if size < 4:
            raise BundleInvalid(f"vocabulary has {size} tokens, need at least 4")
        special = {"mask_id": self.mask_id, "pad_id": self.pad_id, "unk_id": self.unk_id}
        for name, tid in special.items():
            if not 0 <= tid < size:
                raise BundleInvalid(f"{name}={tid} outside vocabulary of size {size}")
        if len(set(special.values())) != 3:
            raise BundleInvalid(f"mask/pad/unk ids must be pairwise distinct, got {special}")
        for name, tid in (("cls_id", self.cls_id), ("sep_id", self.sep_id)):
            if tid is not None and not 0 <= tid < size:
                raise BundleInvalid(f"{name}={tid} outside vocabulary of size {size}")
        if self.max_len < 1:
            raise BundleInvalid(f"max_len must be positive, got {self.max_len}")
        # first occurrence wins for duplicate surfaces
        ids: dict[str, int] = {}
        for i, tok in enumerate(self.tokens):
            ids.setdefault(tok, i)
        object.__setattr__(self, "_ids", ids)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def mask_surface(self) -> str:
        return self.tokens[self.mask_id]

    def id_of(self, surface: str) -> int | None:
        """Token id for an exact surface, or None when absent."""
        return self._ids.get(surface)

    def surface_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    def is_continuation(self, surface: str) -> bool:
        return bool(self.subtoken_marker) and surface.startswith(self.subtoken_marker)

    def special_ids(self) -> set[int]:
        out = {self.mask_id, self.pad_id, self.unk_id}
        if self.cls_id is not None:
            out.add(self.cls_id)
        if self.sep_id is not None:
            out.add(self.sep_id)
        return out


def read_vocab_file(path: Path) -> tuple[str, ...]:
    """Read one-token-per-line vocab.txt. Line number = token id."""
    if not path.is_file():
        raise BundleInvalid(f"missing vocabulary file: {path}")
    raw = path.read_text(encoding="utf-8")
    lines = raw.split("\n")
    if lines and lines[-1] == "":  # trailing newline
        lines = lines[:-1]
    if any(line == "" for line in lines):
        raise BundleInvalid(f"{path}: empty vocabulary line")
    return tuple(lines)


def load_vocab(bundle_dir: Path) -> VocabInfo:
    """Build VocabInfo from a bundle directory's vocab.txt + meta.json."""
    bundle_dir = Path(bundle_dir)
    tokens = read_vocab_file(bundle_dir / "vocab.txt")
    meta_path = bundle_dir / "meta.json"
    if not meta_path.is_file():
        raise BundleInvalid(f"missing metadata file: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise BundleInvalid(f"{meta_path}: not valid JSON ({e})") from e
    for key in ("mask_id", "pad_id", "unk_id"):
        if key not in meta:
            raise BundleInvalid(f"{meta_path}: missing required key {key!r}")
    return VocabInfo(
        tokens=tokens,
        mask_id=int(meta["mask_id"]),
        pad_id=int(meta["pad_id"]),
        unk_id=int(meta["unk_id"]),
        subtoken_marker=str(meta.get("subtoken_marker", "##")),
        max_len=int(meta.get("max_len", DEFAULT_MAX_LEN)),
        cls_id=None if meta.get("cls_id") is None else int(meta["cls_id"]),
        sep_id=None if meta.get("sep_id") is None else int(meta["sep_id"]),
        lowercase=bool(meta.get("lowercase", False)),
    )
