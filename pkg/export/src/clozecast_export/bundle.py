"""Turn a Hugging Face masked-LM checkpoint into an engine bundle.

A bundle directory holds ``model.onnx``, ``vocab.txt`` (one token per
line, line number = token id), and ``meta.json`` (special-token ids,
sequence budget, casing, and the graph checksum). ``export`` also writes
``export_manifest.json`` recording provenance next to the bundle files.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import torch
from transformers import AutoConfig, AutoModelForMaskedLM, AutoTokenizer

from .errors import (
    ExportError,
    NoMLMHead,
    TokenizerIncompatible,
    UnsupportedArchitecture,
)
from .graph import build_mlm_graph

SUBTOKEN_MARKER = "##"


@dataclass(frozen=True)
class ExportManifest:
    """Provenance record for one exported bundle."""

    source: str
    vocab_size: int
    mask_id: int
    pad_id: int
    unk_id: int
    max_len: int
    created: str
    graph_sha256: str

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "vocab_size": self.vocab_size,
            "mask_id": self.mask_id,
            "pad_id": self.pad_id,
            "unk_id": self.unk_id,
            "max_len": self.max_len,
            "created": self.created,
            "graph_sha256": self.graph_sha256,
        }


def _load_config(model_id: str):
    try:
        return AutoConfig.from_pretrained(model_id)
    except (OSError, ValueError) as exc:
        raise ExportError(f"cannot read checkpoint {model_id}: {exc}") from exc


def _check_architecture(config) -> None:
    if config.model_type != "bert":
        raise UnsupportedArchitecture(
            f"model type {config.model_type!r} is not supported; "
            "only BERT-style wordpiece encoders are covered"
        )
    act = getattr(config, "hidden_act", "gelu")
    if act != "gelu":
        raise UnsupportedArchitecture(
            f"hidden activation {act!r} is not supported (need exact-erf gelu)"
        )
    pos = getattr(config, "position_embedding_type", "absolute")
    if pos != "absolute":
        raise UnsupportedArchitecture(
            f"position embedding type {pos!r} is not supported"
        )


def _load_tokenizer(model_id: str):
    try:
        return AutoTokenizer.from_pretrained(model_id)
    except (OSError, ValueError) as exc:
        raise ExportError(f"cannot load tokenizer for {model_id}: {exc}") from exc


def _ordered_vocab(tokenizer) -> list[str]:
    """Tokens by id, after checking the mapping survives one-per-line form."""
    vocab = tokenizer.get_vocab()
    size = len(vocab)
    for token in vocab:
        if token == "":
            raise TokenizerIncompatible("vocabulary contains an empty token")
        if "\n" in token or "\r" in token:
            raise TokenizerIncompatible(
                f"token {token!r} contains a line break and cannot be "
                "written one token per line"
            )
    if sorted(vocab.values()) != list(range(size)):
        raise TokenizerIncompatible(
            f"token ids are not the contiguous range 0..{size - 1}"
        )
    tokens = [""] * size
    for token, token_id in vocab.items():
        tokens[token_id] = token
    return tokens


def _special_ids(tokenizer) -> dict:
    required = {
        "mask_id": tokenizer.mask_token_id,
        "pad_id": tokenizer.pad_token_id,
        "unk_id": tokenizer.unk_token_id,
    }
    for name, token_id in required.items():
        if token_id is None:
            raise TokenizerIncompatible(
                f"tokenizer declares no {name.removesuffix('_id')} token"
            )
    if len(set(required.values())) != 3:
        raise TokenizerIncompatible(
            f"mask/pad/unk ids must be pairwise distinct, got {required}"
        )
    required["cls_id"] = tokenizer.cls_token_id
    required["sep_id"] = tokenizer.sep_token_id
    return required


def _load_model(model_id: str):
    try:
        model, info = AutoModelForMaskedLM.from_pretrained(
            model_id, output_loading_info=True
        )
    except ValueError as exc:
        raise NoMLMHead(
            f"checkpoint {model_id} cannot load as a masked LM: {exc}"
        ) from exc
    head_missing = sorted(
        key
        for key in info.get("missing_keys", ())
        if key.startswith("cls.predictions.")
        and not key.startswith("cls.predictions.decoder.")
    )
    if head_missing:
        raise NoMLMHead(
            "checkpoint provides no trained masked-language-model head "
            f"(uninitialized: {', '.join(head_missing)})"
        )
    model.eval()
    return model


def _smoke_forward(model, specials: dict, vocab_size: int) -> None:
    """One source-side cloze prompt must yield a normalized distribution."""
    probe = [specials["mask_id"]]
    mask_index = 0
    if specials["cls_id"] is not None:
        probe = [specials["cls_id"]] + probe
        mask_index = 1
    if specials["sep_id"] is not None:
        probe = probe + [specials["sep_id"]]
    with torch.no_grad():
        logits = model(input_ids=torch.tensor([probe])).logits
    if tuple(logits.shape) != (1, len(probe), vocab_size):
        raise ExportError(
            f"smoke forward produced logits of shape {tuple(logits.shape)}, "
            f"expected (1, {len(probe)}, {vocab_size})"
        )
    if not torch.isfinite(logits).all():
        raise ExportError("smoke forward produced non-finite logits")
    total = torch.softmax(logits[0, mask_index], dim=-1).sum().item()
    if abs(total - 1.0) > 1e-4:
        raise ExportError(f"smoke distribution sums to {total}, expected 1")


def _write_atomic(path: Path, data) -> None:
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, bytes):
        tmp.write_bytes(data)
    else:
        tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def _check_written(out_dir: Path, tokens: list[str], specials: dict, digest: str):
    written = (out_dir / "vocab.txt").read_text(encoding="utf-8").split("\n")
    if written and written[-1] == "":
        written = written[:-1]
    if written != tokens:
        raise ExportError("vocabulary did not survive the one-token-per-line form")
    actual = hashlib.sha256((out_dir / "model.onnx").read_bytes()).hexdigest()
    if actual != digest:
        raise ExportError(
            f"graph checksum mismatch after writing: {actual} != {digest}"
        )
    for name in ("mask_id", "pad_id", "unk_id"):
        if not 0 <= specials[name] < len(tokens):
            raise ExportError(f"{name}={specials[name]} lies outside the vocabulary")


def export(model_id, out_dir, *, max_len: int = 512) -> ExportManifest:
    """Export one checkpoint into ``out_dir`` and return its manifest."""
    model_id = str(model_id)
    out_dir = Path(out_dir)

    config = _load_config(model_id)
    _check_architecture(config)
    tokenizer = _load_tokenizer(model_id)
    tokens = _ordered_vocab(tokenizer)
    specials = _special_ids(tokenizer)
    if len(tokens) != config.vocab_size:
        raise TokenizerIncompatible(
            f"tokenizer has {len(tokens)} tokens but the model declares "
            f"vocab_size {config.vocab_size}"
        )
    model = _load_model(model_id)
    _smoke_forward(model, specials, len(tokens))

    effective_max_len = min(int(max_len), int(config.max_position_embeddings))
    if effective_max_len < 3:
        raise ExportError(
            f"effective sequence budget {effective_max_len} is too small"
        )

    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    graph_bytes = build_mlm_graph(
        state,
        num_layers=config.num_hidden_layers,
        num_heads=config.num_attention_heads,
        layer_norm_eps=config.layer_norm_eps,
        graph_name=f"{config.model_type}-mlm",
    )
    digest = hashlib.sha256(graph_bytes).hexdigest()

    lowercase = bool(getattr(tokenizer, "do_lower_case", False))
    meta = {
        "mask_id": specials["mask_id"],
        "pad_id": specials["pad_id"],
        "unk_id": specials["unk_id"],
        "max_len": effective_max_len,
        "subtoken_marker": SUBTOKEN_MARKER,
        "lowercase": lowercase,
        "graph_sha256": digest,
    }
    if specials["cls_id"] is not None:
        meta["cls_id"] = specials["cls_id"]
    if specials["sep_id"] is not None:
        meta["sep_id"] = specials["sep_id"]

    manifest = ExportManifest(
        source=model_id,
        vocab_size=len(tokens),
        mask_id=specials["mask_id"],
        pad_id=specials["pad_id"],
        unk_id=specials["unk_id"],
        max_len=effective_max_len,
        created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        graph_sha256=digest,
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_atomic(out_dir / "model.onnx", graph_bytes)
    _write_atomic(out_dir / "vocab.txt", "\n".join(tokens) + "\n")
    _write_atomic(out_dir / "meta.json", json.dumps(meta, indent=2) + "\n")
    _write_atomic(
        out_dir / "export_manifest.json",
        json.dumps(manifest.to_dict(), indent=2) + "\n",
    )
    _check_written(out_dir, tokens, specials, digest)
    return manifest
