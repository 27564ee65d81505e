"""Dataset records, JSONL ingestion, atomic artifact writing, run manifests.

Record-level problems (bad JSON, missing fields, multi-label lists) never
abort ingestion: they are collected alongside the good records so runs
can finish partially and report what was skipped. File-level problems
(missing paths, unreadable files) raise.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from importlib import metadata as _metadata
from pathlib import Path

from .errors import SchemaMismatch


@dataclass(frozen=True)
class LabeledExample:
    id: str
    text: str
    entity: str | None = None
    label: str | None = None


@dataclass(frozen=True)
class FillMaskExample:
    id: str
    text: str
    masked_word: str


@dataclass(frozen=True)
class RecordFailure:
    line: int  # 1-based line number in the source file
    record_id: str | None
    reason: str


def _coerce_id(value) -> str:
    if isinstance(value, str) and value:
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    raise SchemaMismatch(f"'id' must be a non-empty string or integer, got {value!r}")


def _coerce_label(value) -> str:
    if isinstance(value, list):
        raise SchemaMismatch(
            "multi-label records are not supported; 'label' must be a single value"
        )
    if isinstance(value, str) and value:
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    raise SchemaMismatch(f"'label' must be a non-empty string or integer, got {value!r}")


def _require_text(obj: dict, key: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value.strip():
        raise SchemaMismatch(f"{key!r} must be a non-empty string")
    return value


def _parse_labeled(obj: dict, task: str) -> LabeledExample:
    if not isinstance(obj, dict):
        raise SchemaMismatch("record must be a JSON object")
    record_id = _coerce_id(obj.get("id"))
    text = _require_text(obj, "text")
    entity = None
    if task == "entity":
        entity = _require_text(obj, "entity")
    label = None
    if obj.get("label") is not None:
        label = _coerce_label(obj["label"])
    return LabeledExample(id=record_id, text=text, entity=entity, label=label)


def _parse_fillmask(obj: dict) -> FillMaskExample:
    if not isinstance(obj, dict):
        raise SchemaMismatch("record must be a JSON object")
    return FillMaskExample(
        id=_coerce_id(obj.get("id")),
        text=_require_text(obj, "text"),
        masked_word=_require_text(obj, "masked_word"),
    )


def _read_jsonl(path) -> list[tuple[int, dict | None, str | None]]:
    """(line number, parsed object or None, error or None) per non-blank line."""
    path = Path(path)
    out: list[tuple[int, dict | None, str | None]] = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                out.append((lineno, json.loads(line), None))
            except json.JSONDecodeError as exc:
                out.append((lineno, None, f"invalid JSON: {exc}"))
    return out


def read_dataset(
    path, task: str
) -> tuple[list[LabeledExample], list[RecordFailure]]:
    """Read a classification dataset; task is "doc" or "entity"."""
    if task not in ("doc", "entity"):
        raise ValueError(f"task must be 'doc' or 'entity', got {task!r}")
    examples: list[LabeledExample] = []
    failures: list[RecordFailure] = []
    for lineno, obj, error in _read_jsonl(path):
        if error is not None:
            failures.append(RecordFailure(line=lineno, record_id=None, reason=error))
            continue
        try:
            examples.append(_parse_labeled(obj, task))
        except SchemaMismatch as exc:
            rid = obj.get("id") if isinstance(obj, dict) else None
            failures.append(
                RecordFailure(
                    line=lineno,
                    record_id=str(rid) if rid is not None else None,
                    reason=str(exc),
                )
            )
    return examples, failures


def read_fillmask_dataset(
    path,
) -> tuple[list[FillMaskExample], list[RecordFailure]]:
    examples: list[FillMaskExample] = []
    failures: list[RecordFailure] = []
    for lineno, obj, error in _read_jsonl(path):
        if error is not None:
            failures.append(RecordFailure(line=lineno, record_id=None, reason=error))
            continue
        try:
            examples.append(_parse_fillmask(obj))
        except SchemaMismatch as exc:
            rid = obj.get("id") if isinstance(obj, dict) else None
            failures.append(
                RecordFailure(
                    line=lineno,
                    record_id=str(rid) if rid is not None else None,
                    reason=str(exc),
                )
            )
    return examples, failures


def read_sentences(path) -> list[tuple[str, str]]:
    """(sentence id, text) pairs from JSONL ({"id","text"}) or plain text.

    Plain-text files score one sentence per line, with the line number as
    the id; blank lines are skipped.
    """
    path = Path(path)
    if path.suffix.lower() in (".jsonl", ".json", ".ndjson"):
        pairs: list[tuple[str, str]] = []
        for lineno, obj, error in _read_jsonl(path):
            if error is not None:
                raise SchemaMismatch(f"{path}:{lineno}: {error}")
            if not isinstance(obj, dict):
                raise SchemaMismatch(f"{path}:{lineno}: record must be a JSON object")
            pairs.append((_coerce_id(obj.get("id")), _require_text(obj, "text")))
        return pairs
    lines = path.read_text(encoding="utf-8").split("\n")
    return [
        (str(lineno), line)
        for lineno, line in enumerate(lines, start=1)
        if line.strip()
    ]


def read_gold(path) -> dict[str, str]:
    """Gold labels {"id","label"} per line -> id->label lookup."""
    golds: dict[str, str] = {}
    for lineno, obj, error in _read_jsonl(path):
        if error is not None:
            raise SchemaMismatch(f"{path}:{lineno}: {error}")
        if not isinstance(obj, dict):
            raise SchemaMismatch(f"{path}:{lineno}: record must be a JSON object")
        record_id = _coerce_id(obj.get("id"))
        label = obj.get("label")
        if label is None:
            raise SchemaMismatch(f"{path}:{lineno}: missing 'label'")
        golds[record_id] = _coerce_label(label)
    return golds


def read_predictions(path) -> list[tuple[str, str]]:
    """(id, predicted) pairs from a predictions JSONL file."""
    pairs: list[tuple[str, str]] = []
    for lineno, obj, error in _read_jsonl(path):
        if error is not None:
            raise SchemaMismatch(f"{path}:{lineno}: {error}")
        if not isinstance(obj, dict):
            raise SchemaMismatch(f"{path}:{lineno}: record must be a JSON object")
        predicted = obj.get("predicted")
        if not isinstance(predicted, str) or not predicted:
            raise SchemaMismatch(f"{path}:{lineno}: 'predicted' must be a non-empty string")
        pairs.append((_coerce_id(obj.get("id")), predicted))
    return pairs


# --------------------------------------------------------------------------
# artifact writing

def atomic_write_text(path, content: str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        dir=path.parent, prefix=f".{path.name}.", suffix=".tmp"
    )
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(content)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def predictions_to_jsonl(predictions) -> str:
    """One line per prediction: {"id","predicted","scores":{class:score}}."""
    lines = []
    for pred in predictions:
        lines.append(
            json.dumps(
                {
                    "id": pred.id,
                    "predicted": pred.predicted,
                    "scores": {cid: score for cid, score in pred.scores.items()},
                },
                ensure_ascii=False,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def package_version() -> str:
    try:
        return _metadata.version("clozecast")
    except _metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(
    out_dir,
    subcommand: str,
    inputs: dict[str, str],
    outputs: dict[str, str],
    parameters: dict,
) -> Path:
    """Record what a run consumed and produced, with checksums.

    The timestamp is the only field excluded from reproducibility claims;
    everything else is byte-stable for identical inputs.
    """
    out_dir = Path(out_dir)
    manifest = {
        "subcommand": subcommand,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "package_version": package_version(),
        "inputs": {
            name: {"path": str(p), "sha256": sha256_file(p)}
            for name, p in sorted(inputs.items())
            if p is not None and Path(p).is_file()
        },
        "outputs": {
            name: {"path": str(p), "sha256": sha256_file(p)}
            for name, p in sorted(outputs.items())
            if p is not None and Path(p).is_file()
        },
        "parameters": parameters,
    }
    path = out_dir / "manifest.json"
    atomic_write_text(path, json.dumps(manifest, ensure_ascii=False, indent=2) + "\n")
    return path
