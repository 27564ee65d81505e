"""Shared fixtures: tiny seeded checkpoints and an exported bundle.

The engine under test is driven exclusively through its installed
``clozecast`` command line; nothing here imports the engine package.
"""

from __future__ import annotations

import shutil
import subprocess

import pytest
import torch
import transformers
from transformers import BertConfig, BertForMaskedLM, BertTokenizer

transformers.logging.set_verbosity_error()

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
WORDS = [
    "il", "la", "di", "e", "un", "una", "per", "con", "del", "della",
    "questo", "questa", "documento", "testo", "nota", "delibera", "atto",
    "parla", "tratta", "riguarda", "comune", "ufficio", "servizio",
    "ambiente", "natura", "verde", "rifiuti", "acqua", "aria", "energia",
    "finanza", "tributi", "spese", "bilancio", "cultura", "sport",
    "scuola", "museo", "teatro", "strada",
]
VOCAB = SPECIALS + WORDS
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)
SEED = 20260815

ENGINE = shutil.which("clozecast")


def tiny_config(vocab_size: int = len(VOCAB)) -> BertConfig:
    return BertConfig(
        vocab_size=vocab_size,
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
        type_vocab_size=2,
        pad_token_id=PAD_ID,
    )


def make_tokenizer() -> BertTokenizer:
    return BertTokenizer(
        vocab={token: i for i, token in enumerate(VOCAB)}, do_lower_case=True
    )


def save_checkpoint(directory, model) -> None:
    model.eval()
    model.save_pretrained(directory)
    make_tokenizer().save_pretrained(directory)


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """Seeded random BERT MLM over a small Italian vocabulary."""
    directory = tmp_path_factory.mktemp("checkpoint") / "tiny-italian-bert"
    torch.manual_seed(SEED)
    model = BertForMaskedLM(tiny_config())
    with torch.no_grad():
        # keep structural tokens out of every top-5 so rank probes stay
        # about content words
        model.cls.predictions.bias[: len(SPECIALS)] = -10.0
    save_checkpoint(directory, model)
    return directory


@pytest.fixture(scope="session")
def exported(checkpoint, tmp_path_factory):
    """(bundle directory, manifest) for the session checkpoint."""
    from clozecast_export import export

    out = tmp_path_factory.mktemp("exported") / "tiny-italian-bert"
    manifest = export(checkpoint, out)
    return out, manifest


def run_engine(*args: str) -> subprocess.CompletedProcess:
    """Invoke the engine CLI; the bundle is consumed only through it."""
    assert ENGINE, "the clozecast command line must be installed"
    return subprocess.run(
        [ENGINE, *map(str, args)], capture_output=True, text=True, timeout=300
    )


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
