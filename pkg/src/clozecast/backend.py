"""Masked-token probability backends and model-bundle loading.

A bundle is a directory holding the vocabulary (``vocab.txt``), metadata
(``meta.json``) and exactly one model graph: ``model.onnx`` for a real
encoder or ``toy.json`` for a closed-form rule table used in tests and
examples. Both kinds answer one query: the log-probability of every
vocabulary entry at a masked position.
"""

from __future__ import annotations

import hashlib
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import log_softmax, logsumexp

from .errors import (
    BatchItemError,
    BundleInvalid,
    EmptyInput,
    PositionNotMasked,
    SequenceTooLong,
)
from .vocab import VocabInfo, load_vocab


@dataclass(frozen=True)
class TokenSequence:
    """A token id sequence plus the indices that hold the mask id."""

    ids: tuple[int, ...]
    mask_positions: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        object.__setattr__(
            self, "mask_positions", tuple(int(p) for p in self.mask_positions)
        )

    @classmethod
    def from_ids(cls, ids, mask_id: int) -> "TokenSequence":
        ids = tuple(int(i) for i in ids)
        return cls(
            ids=ids,
            mask_positions=tuple(i for i, t in enumerate(ids) if t == mask_id),
        )


@dataclass(frozen=True)
class MaskDistribution:
    """Log-probabilities over the full vocabulary at one masked position."""

    logprobs: np.ndarray  # float64, shape (vocab_size,)
    validate: bool = True

    def __post_init__(self):
        arr = np.asarray(self.logprobs, dtype=np.float64)
        object.__setattr__(self, "logprobs", arr)
        if arr.ndim != 1:
            raise ValueError(f"logprobs must be 1-D, got shape {arr.shape}")
        if self.validate:
            if not np.isfinite(arr).all():
                raise ValueError("logprobs must be finite everywhere")
            total = logsumexp(arr)
            if abs(total) > 1e-5:
                raise ValueError(f"logprobs do not normalize: logsumexp={total!r}")

    @property
    def size(self) -> int:
        return int(self.logprobs.shape[0])

    def logprob(self, token_id: int) -> float:
        if not 0 <= token_id < self.size:
            raise IndexError(f"token id {token_id} out of range [0, {self.size})")
        return float(self.logprobs[token_id])

    def top_k(self, k: int) -> list[tuple[int, float]]:
        """Best k (token_id, logprob) pairs; ties broken by lower id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        k = min(k, self.size)
        order = sorted(range(self.size), key=lambda i: (-self.logprobs[i], i))
        return [(i, float(self.logprobs[i])) for i in order[:k]]

    def rank_of(self, token_id: int) -> int:
        """1-based rank of token_id under the (-logprob, id) ordering."""
        lp = self.logprob(token_id)
        better = int(np.sum(self.logprobs > lp))
        ties_before = int(np.sum((self.logprobs == lp).nonzero()[0] < token_id))
        return better + ties_before + 1


class Backend(ABC):
    """Anything that can fill a masked position with a distribution."""

    def __init__(self, vocab: VocabInfo):
        self.vocab = vocab

    def _check_request(self, ids, position: int) -> list[int]:
        ids = list(ids)
        if not ids:
            raise EmptyInput("token sequence is empty")
        if len(ids) > self.vocab.max_len:
            raise SequenceTooLong(
                f"sequence length {len(ids)} exceeds max_len {self.vocab.max_len}"
            )
        for tid in ids:
            if not 0 <= tid < self.vocab.size:
                raise ValueError(f"token id {tid} out of range [0, {self.vocab.size})")
        if not 0 <= position < len(ids):
            raise PositionNotMasked(
                f"position {position} outside sequence of length {len(ids)}"
            )
        if ids[position] != self.vocab.mask_id:
            raise PositionNotMasked(
                f"position {position} holds id {ids[position]}, not the mask id "
                f"{self.vocab.mask_id}"
            )
        return ids

    @abstractmethod
    def logprobs_at(self, ids, position: int) -> MaskDistribution:
        """Distribution over the vocabulary at a masked position."""

    def predict_mask(self, seq: TokenSequence, position: int) -> MaskDistribution:
        """Distribution at one of the sequence's declared mask positions."""
        if position not in seq.mask_positions:
            raise PositionNotMasked(
                f"position {position} is not among the sequence's mask positions "
                f"{list(seq.mask_positions)}"
            )
        return self.logprobs_at(list(seq.ids), position)

    def batch_predict(self, seqs) -> list[MaskDistribution]:
        """Order-preserving batch over sequences with exactly one mask each.

        Failures carry the index of the offending item.
        """
        out = []
        for index, seq in enumerate(seqs):
            try:
                if len(seq.mask_positions) != 1:
                    raise PositionNotMasked(
                        f"sequence has {len(seq.mask_positions)} mask positions, "
                        "expected exactly one"
                    )
                out.append(self.predict_mask(seq, seq.mask_positions[0]))
            except Exception as exc:
                raise BatchItemError(index, exc) from exc
        return out


class ToyBackend(Backend):
    """Rule-table backend with closed-form distributions.

    ``toy.json`` schema::

        {
          "rules": [
            {"when": {"prev": "<surface>"}, "probs": {"<surface>": 0.9, ...}},
            {"when": {"next": "<surface>"}, "probs": {...}},
            {"when": {"contains": "<surface>"}, "probs": {...}}
          ],
          "default": {"probs": {...}}
        }

    The first rule whose condition matches the context wins; without a match
    the default applies. Probabilities name vocabulary surfaces and must sum
    to at most 1; the remaining mass is spread uniformly over every surface
    the rule does not name.
    """

    _CONDITIONS = ("prev", "next", "contains")

    def __init__(self, vocab: VocabInfo, spec: dict):
        super().__init__(vocab)
        if not isinstance(spec, dict):
            raise BundleInvalid("toy.json must hold a JSON object")
        unknown = set(spec) - {"rules", "default"}
        if unknown:
            raise BundleInvalid(f"toy.json has unknown keys: {sorted(unknown)}")
        rules = spec.get("rules", [])
        if not isinstance(rules, list):
            raise BundleInvalid("toy.json 'rules' must be a list")
        self._rules: list[tuple[str, str, np.ndarray]] = []
        for i, rule in enumerate(rules):
            if not isinstance(rule, dict) or set(rule) != {"when", "probs"}:
                raise BundleInvalid(
                    f"rule {i} must be an object with exactly 'when' and 'probs'"
                )
            when = rule["when"]
            if (
                not isinstance(when, dict)
                or len(when) != 1
                or next(iter(when)) not in self._CONDITIONS
            ):
                raise BundleInvalid(
                    f"rule {i} 'when' must hold exactly one of {self._CONDITIONS}"
                )
            kind, surface = next(iter(when.items()))
            if vocab.id_of(surface) is None:
                raise BundleInvalid(f"rule {i} condition surface {surface!r} not in vocabulary")
            vector = self._build_vector(rule["probs"], f"rule {i}")
            self._rules.append((kind, surface, vector))
        default = spec.get("default", {"probs": {}})
        if not isinstance(default, dict) or set(default) - {"probs"}:
            raise BundleInvalid("toy.json 'default' must be an object with only 'probs'")
        self._default = self._build_vector(default.get("probs", {}), "default")

    def _build_vector(self, probs: dict, where: str) -> np.ndarray:
        if not isinstance(probs, dict):
            raise BundleInvalid(f"{where} 'probs' must be an object")
        vocab = self.vocab
        named: dict[int, float] = {}
        total = 0.0
        for surface, p in probs.items():
            tid = vocab.id_of(surface)
            if tid is None:
                raise BundleInvalid(f"{where} names unknown surface {surface!r}")
            if tid in named:
                raise BundleInvalid(f"{where} names surface {surface!r} twice (duplicate id)")
            if not isinstance(p, (int, float)) or not 0 < float(p) <= 1:
                raise BundleInvalid(f"{where} probability for {surface!r} must be in (0, 1]")
            named[tid] = float(p)
            total += float(p)
        if total > 1 + 1e-9:
            raise BundleInvalid(f"{where} probabilities sum to {total}, above 1")
        rest = vocab.size - len(named)
        fill = max(0.0, 1.0 - total) / rest if rest else 0.0
        if rest and fill == 0.0:
            raise BundleInvalid(
                f"{where} assigns all mass to named surfaces, leaving zero "
                f"probability for {rest} other entries; distributions must "
                "stay finite in log space"
            )
        dense = np.full(vocab.size, fill, dtype=np.float64)
        for tid, p in named.items():
            dense[tid] = p
        return np.log(dense)

    def _matches(self, kind: str, surface: str, ids: list[int], position: int) -> bool:
        vocab = self.vocab
        if kind == "prev":
            return position > 0 and vocab.surface_of(ids[position - 1]) == surface
        if kind == "next":
            return position + 1 < len(ids) and vocab.surface_of(ids[position + 1]) == surface
        return any(vocab.surface_of(t) == surface for t in ids)

    def logprobs_at(self, ids, position: int) -> MaskDistribution:
        ids = self._check_request(ids, position)
        for kind, surface, vector in self._rules:
            if self._matches(kind, surface, ids, position):
                return MaskDistribution(vector.copy())
        return MaskDistribution(self._default.copy())


class OnnxBackend(Backend):
    """Runs a masked-LM ONNX graph with the bundled interpreter."""

    _FEEDABLE = ("input_ids", "attention_mask", "token_type_ids")

    def __init__(self, vocab: VocabInfo, runner):
        super().__init__(vocab)
        self._runner = runner
        for name in runner.input_names:
            if name not in self._FEEDABLE:
                raise BundleInvalid(
                    f"graph declares unsupported input {name!r}; "
                    f"supported inputs are {self._FEEDABLE}"
                )
        if "input_ids" not in runner.input_names:
            raise BundleInvalid("graph does not declare an 'input_ids' input")
        if len(runner.output_names) != 1:
            raise BundleInvalid(
                f"graph must declare exactly one output, got {runner.output_names}"
            )

    def _run(self, ids: list[int]) -> np.ndarray:
        feeds = {}
        row = np.asarray([ids], dtype=np.int64)
        for name in self._runner.input_names:
            if name == "input_ids":
                feeds[name] = row
            elif name == "attention_mask":
                feeds[name] = np.ones_like(row)
            else:
                feeds[name] = np.zeros_like(row)
        (logits,) = self._runner.run(feeds).values()
        logits = np.asarray(logits)
        if logits.ndim == 3:
            logits = logits[0]
        if logits.ndim != 2 or logits.shape != (len(ids), self.vocab.size):
            raise BundleInvalid(
                f"graph output has shape {logits.shape}, expected "
                f"({len(ids)}, {self.vocab.size})"
            )
        return logits

    def logprobs_at(self, ids, position: int) -> MaskDistribution:
        ids = self._check_request(ids, position)
        logits = self._run(ids)
        return MaskDistribution(log_softmax(logits[position].astype(np.float64)))


@dataclass(frozen=True)
class Bundle:
    path: Path
    kind: str  # "toy" | "onnx"
    vocab: VocabInfo
    backend: Backend


def _model_file(bundle_dir: Path) -> tuple[str, Path]:
    onnx_path = bundle_dir / "model.onnx"
    toy_path = bundle_dir / "toy.json"
    have_onnx, have_toy = onnx_path.is_file(), toy_path.is_file()
    if have_onnx and have_toy:
        raise BundleInvalid("bundle holds both model.onnx and toy.json; exactly one allowed")
    if not have_onnx and not have_toy:
        raise BundleInvalid("bundle holds neither model.onnx nor toy.json")
    return ("onnx", onnx_path) if have_onnx else ("toy", toy_path)


def _read_meta(bundle_dir: Path) -> dict:
    meta_path = bundle_dir / "meta.json"
    if not meta_path.is_file():
        raise BundleInvalid("bundle is missing meta.json")
    try:
        return json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleInvalid(f"meta.json is not valid JSON: {exc}") from exc


def _check_graph_checksum(bundle_dir: Path, model_path: Path) -> None:
    declared = _read_meta(bundle_dir).get("graph_sha256")
    if declared is None:
        return
    actual = hashlib.sha256(model_path.read_bytes()).hexdigest()
    if actual != declared:
        raise BundleInvalid(
            f"model graph checksum mismatch: meta.json declares {declared}, "
            f"file hashes to {actual}"
        )


def load_bundle(bundle_dir) -> Bundle:
    """Open a bundle directory and construct its backend."""
    bundle_dir = Path(bundle_dir)
    if not bundle_dir.is_dir():
        raise BundleInvalid(f"bundle path {bundle_dir} is not a directory")
    kind, model_path = _model_file(bundle_dir)
    vocab = load_vocab(bundle_dir)
    _check_graph_checksum(bundle_dir, model_path)
    if kind == "toy":
        try:
            spec = json.loads(model_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise BundleInvalid(f"toy.json is not valid JSON: {exc}") from exc
        backend: Backend = ToyBackend(vocab, spec)
    else:
        from .onnx_graph import GraphRunner

        backend = OnnxBackend(vocab, GraphRunner.from_file(model_path))
    return Bundle(path=bundle_dir, kind=kind, vocab=vocab, backend=backend)


def validate_bundle(bundle_dir) -> dict:
    """Structured health report: {"ok": bool, "checks": [{name, ok, detail}]}."""
    bundle_dir = Path(bundle_dir)
    checks: list[dict] = []

    def record(name: str, fn) -> bool:
        try:
            detail = fn()
            checks.append({"name": name, "ok": True, "detail": detail or ""})
            return True
        except Exception as exc:
            checks.append({"name": name, "ok": False, "detail": str(exc)})
            return False

    state: dict = {}

    def check_layout():
        if not bundle_dir.is_dir():
            raise BundleInvalid(f"bundle path {bundle_dir} is not a directory")
        kind, model_path = _model_file(bundle_dir)
        if not (bundle_dir / "vocab.txt").is_file():
            raise BundleInvalid("bundle is missing vocab.txt")
        state["kind"], state["model_path"] = kind, model_path
        return f"kind={kind}"

    def check_vocab():
        state["vocab"] = load_vocab(bundle_dir)
        return f"{state['vocab'].size} entries"

    def check_checksum():
        declared = _read_meta(bundle_dir).get("graph_sha256")
        if declared is None:
            return "no checksum declared"
        _check_graph_checksum(bundle_dir, state["model_path"])
        return "checksum matches"

    def check_backend():
        state["bundle"] = load_bundle(bundle_dir)
        return type(state["bundle"].backend).__name__

    def check_forward():
        bundle: Bundle = state["bundle"]
        from .tokenizer import Tokenizer

        tok = Tokenizer(bundle.vocab)
        ids, shift = tok.wrap_scaffold([bundle.vocab.mask_id])
        dist = bundle.backend.logprobs_at(ids, shift)
        if dist.size != bundle.vocab.size:
            raise BundleInvalid(
                f"distribution size {dist.size} != vocabulary size {bundle.vocab.size}"
            )
        return f"distribution over {dist.size} entries normalizes"

    ok = record("layout", check_layout)
    ok = record("vocabulary", check_vocab) and ok if ok else ok
    if ok:
        ok = record("graph-checksum", check_checksum) and ok
    if ok:
        ok = record("backend-load", check_backend) and ok
    if ok:
        ok = record("forward-pass", check_forward) and ok
    return {"ok": ok, "checks": checks}
