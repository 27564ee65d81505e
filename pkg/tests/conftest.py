"""Shared fixtures: in-memory vocabularies, toy backends, on-disk bundles."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest

from clozecast.backend import ToyBackend
from clozecast.tokenizer import Tokenizer
from clozecast.vocab import VocabInfo

SPECIALS = ["[PAD]", "[UNK]", "[MASK]", "[CLS]", "[SEP]"]


def make_vocab(
    words,
    lowercase: bool = False,
    max_len: int = 64,
    scaffold: bool = True,
    subtoken_marker: str = "##",
) -> VocabInfo:
    """Vocabulary with the standard specials followed by ``words``."""
    tokens = tuple(SPECIALS) + tuple(words)
    return VocabInfo(
        tokens=tokens,
        mask_id=2,
        pad_id=0,
        unk_id=1,
        subtoken_marker=subtoken_marker,
        max_len=max_len,
        cls_id=3 if scaffold else None,
        sep_id=4 if scaffold else None,
        lowercase=lowercase,
    )


def make_toy(vocab: VocabInfo, rules=None, default=None) -> ToyBackend:
    spec: dict = {"default": {"probs": default or {}}}
    if rules is not None:
        spec["rules"] = rules
    return ToyBackend(vocab, spec)


def write_bundle(
    directory: Path,
    words,
    toy_spec: dict | None = None,
    meta_extra: dict | None = None,
    checksum: bool = True,
    max_len: int = 64,
) -> Path:
    """Write a complete toy bundle directory and return its path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tokens = SPECIALS + list(words)
    (directory / "vocab.txt").write_text("\n".join(tokens) + "\n", encoding="utf-8")
    toy_text = json.dumps(toy_spec or {"default": {"probs": {}}}, indent=2) + "\n"
    (directory / "toy.json").write_text(toy_text, encoding="utf-8")
    meta = {
        "mask_id": 2,
        "pad_id": 0,
        "unk_id": 1,
        "cls_id": 3,
        "sep_id": 4,
        "max_len": max_len,
        "subtoken_marker": "##",
        "lowercase": False,
    }
    if checksum:
        meta["graph_sha256"] = hashlib.sha256(toy_text.encode("utf-8")).hexdigest()
    if meta_extra:
        meta.update(meta_extra)
    (directory / "meta.json").write_text(
        json.dumps(meta, indent=2) + "\n", encoding="utf-8"
    )
    return directory


@pytest.fixture
def italian_words():
    """Words covering the default prompt templates plus test content."""
    return [
        ".", ",", "'",
        "questo", "documento", "parla", "di", "in", "questa", "frase",
        "è", "un", "esempio",
        "il", "la", "e", "per", "del", "dei",
        "comune", "delibera", "verde", "rifiuti", "spese", "tributi",
        "ambiente", "natura", "finanza", "bilancio", "cultura", "arte",
        "mostra", "teatro",
    ]


@pytest.fixture
def italian_vocab(italian_words):
    return make_vocab(italian_words)


@pytest.fixture
def italian_tokenizer(italian_vocab):
    return Tokenizer(italian_vocab)


# -- acceptance criterion reporting ------------------------------------------

_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): marks a test as an acceptance criterion"
    )


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    if report.when == "call":
        marker = item.get_closest_marker("acceptance")
        if marker:
            _ACCEPTANCE_RESULTS.append(
                (marker.args[0], "PASSED" if report.passed else "FAILED")
            )
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name, status in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[ACCEPTANCE] {name}: {status}")
