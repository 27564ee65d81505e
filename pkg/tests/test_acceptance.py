"""Acceptance gate: one marked test per stated success criterion.

Every test carries an ``acceptance(name)`` marker; the terminal summary
prints one ``[ACCEPTANCE] name: PASSED/FAILED`` line per criterion. Each
criterion is verified against an independent oracle (hand arithmetic,
brute-force recount, or byte comparison) at its stated tolerance.
"""

import itertools
import json
import math
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from scipy.special import log_softmax

from clozecast import calibration
from clozecast.backend import MaskDistribution
from clozecast.cli import main
from clozecast.fileio import FillMaskExample, LabeledExample
from clozecast.kv import MiningConfig, build_kv
from clozecast.metrics import evaluate
from clozecast.pipeline import fillmask_topk
from clozecast.pll import pll_corpus, pll_sentence
from clozecast.template import Template
from clozecast.tokenizer import Tokenizer
from clozecast.verbalizer import (
    ResolvedClass,
    ResolvedVerbalizer,
    parse_verbalizer,
    resolve,
)

from .conftest import make_toy, make_vocab, write_bundle

REPO_ROOT = Path(__file__).resolve().parents[1]

# -- small rule-driven model shared by several criteria -----------------------

WORDS = [
    ".", "questo", "documento", "parla", "di", "e",
    "delibera", "rifiuti", "verde", "tributi", "spese",
    "ambiente", "natura", "finanza", "bilancio", "con",
]

RULES = [
    {
        "when": {"contains": "rifiuti"},
        "probs": {"verde": 0.25, "rifiuti": 0.25, "ambiente": 0.2, "natura": 0.1},
    },
    {
        "when": {"contains": "tributi"},
        "probs": {"spese": 0.25, "tributi": 0.25, "finanza": 0.2, "bilancio": 0.1},
    },
]

VERBALIZER = {
    "kind": "manual",
    "classes": [
        {
            "id": "Ambiente",
            "words": [{"surface": "ambiente"}, {"surface": "natura"}],
        },
        {"id": "Finanza", "words": [{"surface": "finanza"}]},
    ],
}

TEMPLATE = "{text} parla di {mask}"

VOCAB_TOTAL = len(WORDS) + 5  # five scaffold/special entries
LEFTOVER = 0.2 / (VOCAB_TOTAL - 4)  # unnamed share under either rule


def toy_stack():
    vocab = make_vocab(WORDS)
    backend = make_toy(vocab, rules=RULES, default={})
    return vocab, backend, Tokenizer(vocab)


# -- synthetic mining corpus: 4 classes, 5 planted indicators, 10 confounders --

SYN_CLASSES = ["alfa", "beta", "gamma", "delta"]
INDICATORS = {c: [f"{c}w{i}" for i in range(5)] for c in SYN_CLASSES}
CONFOUNDERS = [f"conf{i}" for i in range(10)]
TRIGGERS = {c: f"ctx{c}" for c in SYN_CLASSES}

SYN_WORDS = (
    SYN_CLASSES
    + list(TRIGGERS.values())
    + [w for c in SYN_CLASSES for w in INDICATORS[c]]
    + CONFOUNDERS
    + ["parla", "di", "nota"]
)

# Each class's trigger word makes its 5 indicators likely (0.12 each), the
# class name itself moderately likely (0.1), and every confounder mildly
# likely (0.02) — the confounders fire for ALL classes, so only the
# cross-class disjointness filter can remove them.
SYN_RULES = [
    {
        "when": {"contains": TRIGGERS[c]},
        "probs": {
            **{w: 0.12 for w in INDICATORS[c]},
            c: 0.1,
            **{w: 0.02 for w in CONFOUNDERS},
        },
    }
    for c in SYN_CLASSES
]

MINING_CONFIG = dict(candidates_per_occurrence=12, cv_size=8, info_threshold=5)


def syn_stack():
    vocab = make_vocab(SYN_WORDS)
    backend = make_toy(vocab, rules=SYN_RULES, default={})
    return vocab, backend, Tokenizer(vocab)


def syn_mining_records():
    return [
        LabeledExample(id=f"{c}-{j}", text=f"{c} {TRIGGERS[c]} nota", label=c)
        for c in SYN_CLASSES
        for j in range(3)
    ]


def syn_eval_rows():
    """16 labeled records whose planted macro-F1 is exactly 0.875.

    Three correct records per class, plus one alfa-labeled record that the
    rules classify as beta and one beta-labeled record classified as alfa:
    per-class F1 (0.75, 0.75, 1, 1) -> macro 0.875. gamma and delta get a
    fourth correct record so every class has support 4.
    """
    rows = []
    for c in SYN_CLASSES:
        for j in range(3):
            rows.append(
                {"id": f"{c}-ok{j}", "text": f"{TRIGGERS[c]} nota", "label": c}
            )
    rows.append({"id": "adv-a", "text": f"{TRIGGERS['beta']} nota", "label": "alfa"})
    rows.append({"id": "adv-b", "text": f"{TRIGGERS['alfa']} nota", "label": "beta"})
    rows.append({"id": "gamma-ok3", "text": f"{TRIGGERS['gamma']} nota", "label": "gamma"})
    rows.append({"id": "delta-ok3", "text": f"{TRIGGERS['delta']} nota", "label": "delta"})
    return rows


@pytest.fixture(scope="module")
def syn_workspace(tmp_path_factory):
    """On-disk bundle + corpus files for the CLI-level criteria."""
    root = tmp_path_factory.mktemp("syn")
    bundle = write_bundle(
        root / "bundle",
        SYN_WORDS,
        toy_spec={"rules": SYN_RULES, "default": {"probs": {}}},
    )
    mining = root / "mining.jsonl"
    mining.write_text(
        "\n".join(
            json.dumps({"id": e.id, "text": e.text, "label": e.label})
            for e in syn_mining_records()
        )
        + "\n",
        encoding="utf-8",
    )
    eval_set = root / "eval.jsonl"
    eval_set.write_text(
        "\n".join(json.dumps(r) for r in syn_eval_rows()) + "\n",
        encoding="utf-8",
    )
    seeds = root / "seeds.json"
    seeds.write_text(json.dumps({c: [] for c in SYN_CLASSES}), encoding="utf-8")
    return {
        "bundle": str(bundle),
        "mining": str(mining),
        "eval": str(eval_set),
        "seeds": str(seeds),
    }


def run_full_pipeline(ws: dict, out_root: Path) -> dict[str, Path]:
    """build-kv -> calibrate -> classify through the CLI; returns artifacts."""
    kv_out = out_root / "kv"
    assert main(
        [
            "build-kv",
            "--bundle", ws["bundle"],
            "--input", ws["mining"],
            "--out", str(kv_out),
            "--template", TEMPLATE,
            "--seeds", ws["seeds"],
            "--candidates-per-occurrence", str(MINING_CONFIG["candidates_per_occurrence"]),
            "--cv-size", str(MINING_CONFIG["cv_size"]),
            "--info-threshold", str(MINING_CONFIG["info_threshold"]),
        ]
    ) == 0
    cal_out = out_root / "cal"
    assert main(
        [
            "calibrate",
            "--bundle", ws["bundle"],
            "--mode", "contextual",
            "--verbalizer", str(kv_out / "verbalizer.json"),
            "--template", TEMPLATE,
            "--out", str(cal_out),
        ]
    ) == 0
    cls_out = out_root / "cls"
    assert main(
        [
            "classify",
            "--bundle", ws["bundle"],
            "--input", ws["eval"],
            "--out", str(cls_out),
            "--template", TEMPLATE,
            "--verbalizer", str(kv_out / "verbalizer.json"),
            "--calibration", str(cal_out / "calibration.json"),
        ]
    ) == 0
    return {
        "verbalizer": kv_out / "verbalizer.json",
        "calibration": cal_out / "calibration.json",
        "predictions": cls_out / "predictions.jsonl",
    }


# -- criterion 1: calibration identities ---------------------------------------


@pytest.mark.acceptance("calibration-identities")
def test_calibration_identities():
    start = time.perf_counter()
    _, backend, tokenizer = toy_stack()
    template = Template.parse(TEMPLATE)
    verbalizer = resolve(parse_verbalizer(VERBALIZER), tokenizer)

    # Contextual: the corrected score of every label word on the
    # content-free input itself must be exactly zero.
    state = calibration.fit_contextual(template, verbalizer, backend, tokenizer)
    prompt = template.render_content_free(tokenizer)
    dist = backend.logprobs_at(list(prompt.ids), prompt.mask_position)
    for token_id in verbalizer.all_token_ids:
        corrected = dist.logprob(token_id) - state.word_correction(token_id)
        assert corrected == 0.0

    # Batch: per-class mean corrected score over the fitting batch is 0.
    texts = [
        "delibera rifiuti verde",
        "delibera tributi spese",
        "documento rifiuti",
        "spese tributi con",
    ]
    batch_state = calibration.fit_batch(
        template, verbalizer, backend, tokenizer, texts
    )
    rows = []
    for text in texts:
        rendered = template.render(tokenizer, text)
        d = backend.logprobs_at(list(rendered.ids), rendered.mask_position)
        rows.append(verbalizer.score_vector(d.logprobs, state=batch_state))
    means = np.mean(rows, axis=0)
    assert np.all(np.abs(means) <= 1e-9)

    assert time.perf_counter() - start < 1.0


# -- criterion 2: argmax invariance under log-prob shifts -----------------------


@pytest.mark.acceptance("argmax-invariance")
def test_argmax_invariant_under_constant_shift():
    rng = np.random.default_rng(20260815)
    for _ in range(200):
        n_classes = int(rng.integers(2, 6))
        max_words = 3
        size = int(rng.integers(n_classes * max_words + 1, 40))
        logprobs = log_softmax(rng.normal(size=size))

        token_ids = rng.choice(size, size=n_classes * max_words, replace=False)
        classes = []
        for i in range(n_classes):
            n_words = int(rng.integers(1, max_words + 1))
            ids = token_ids[i * max_words : i * max_words + n_words]
            classes.append(
                ResolvedClass(
                    id=f"k{i}",
                    token_ids=tuple(int(t) for t in ids),
                    weights=tuple(float(w) for w in rng.uniform(0.25, 2.0, n_words)),
                    surfaces=tuple(f"w{t}" for t in ids),
                )
            )
        verbalizer = ResolvedVerbalizer(kind="manual", classes=tuple(classes))

        shift = float(rng.uniform(-10.0, 10.0))
        base = MaskDistribution(logprobs)
        shifted = MaskDistribution(logprobs + shift, validate=False)
        index_base, _ = verbalizer.predict_index(base.logprobs)
        index_shifted, _ = verbalizer.predict_index(shifted.logprobs)
        assert index_shifted == index_base


# -- criterion 3: label-word mining recovers planted indicators ------------------


@pytest.mark.acceptance("kv-recovery")
def test_kv_recovers_planted_indicators():
    start = time.perf_counter()
    _, backend, tokenizer = syn_stack()
    template = Template.parse(TEMPLATE)
    cfg = MiningConfig(
        synonyms={c: () for c in SYN_CLASSES}, **MINING_CONFIG
    )
    result = build_kv(syn_mining_records(), template, backend, tokenizer, cfg)

    cv_sets = {cid: set(v.surfaces) for cid, v in result.cv.items()}
    for a, b in itertools.combinations(SYN_CLASSES, 2):
        assert cv_sets[a].isdisjoint(cv_sets[b])

    mined = {
        cls.id: {w.surface for w in cls.words}
        for cls in result.verbalizer.classes
    }
    confounders = set(CONFOUNDERS)
    for c in SYN_CLASSES:
        assert len(mined[c] & set(INDICATORS[c])) >= 4
        assert not mined[c] & confounders
        assert not cv_sets[c] & confounders
    assert result.fallback_classes == ()
    assert time.perf_counter() - start < 10.0


# -- criterion 4: PLL equals a brute-force per-position masker -------------------


@pytest.mark.acceptance("pll-oracle")
def test_pll_matches_brute_force_masker():
    vocab, backend, tokenizer = toy_stack()
    scaffold_ids = {vocab.pad_id, vocab.cls_id, vocab.sep_id}

    def brute_force(text: str) -> tuple[float, int]:
        budget = vocab.max_len - tokenizer.scaffold_len
        ids = list(tokenizer.tokenize(text, max_len=budget).ids)
        wrapped, _ = tokenizer.wrap_scaffold(ids)
        total, count = 0.0, 0
        for position, token_id in enumerate(wrapped):
            if token_id in scaffold_ids:
                continue
            masked = list(wrapped)
            masked[position] = vocab.mask_id
            total += backend.logprobs_at(masked, position).logprob(token_id)
            count += 1
        return total, count

    rng = np.random.default_rng(7)
    for _ in range(100):
        length = int(rng.integers(1, 9))
        text = " ".join(rng.choice(WORDS, size=length))
        result = pll_sentence(text, backend, tokenizer)
        expected_raw, expected_count = brute_force(text)
        assert abs(result.raw - expected_raw) <= 1e-9
        assert result.token_count == expected_count
        assert result.normalized == result.raw / result.token_count

    # Mean/std report vs hand computation on a 2-sentence fixture.
    # "delibera rifiuti": masking "delibera" keeps the rule trigger visible
    # (unnamed leftover mass); masking "rifiuti" silences the rule (uniform).
    norm_a = (math.log(LEFTOVER) + math.log(1 / VOCAB_TOTAL)) / 2
    # "rifiuti e rifiuti": each masked "rifiuti" leaves its twin visible.
    norm_b = (2 * math.log(0.25) + math.log(LEFTOVER)) / 3
    corpus = pll_corpus(
        ["delibera rifiuti", "rifiuti e rifiuti"], backend, tokenizer
    )
    assert corpus.mean == pytest.approx((norm_a + norm_b) / 2, abs=1e-12)
    assert corpus.std == pytest.approx(abs(norm_a - norm_b) / 2, abs=1e-12)
    assert corpus.sentence_count == 2
    assert corpus.failure_count == 0


# -- criterion 5: metrics match a brute-force confusion recount ------------------


@pytest.mark.acceptance("metrics-oracle")
def test_metrics_match_brute_force_recount():
    classes = [f"c{i:02d}" for i in range(13)]
    rng = np.random.default_rng(1313)
    golds = {str(i): str(rng.choice(classes)) for i in range(1000)}
    preds = [(str(i), str(rng.choice(classes))) for i in range(1000)]

    report = evaluate(preds, golds, classes=classes)

    counts = Counter((golds[rid], predicted) for rid, predicted in preds)
    confusion = [
        [counts[(g, p)] for p in classes] for g in classes
    ]
    assert [
        [int(x) for x in row] for row in report.confusion
    ] == confusion

    f1s = []
    supports = []
    for i, cid in enumerate(classes):
        tp = counts[(cid, cid)]
        predicted_count = sum(counts[(g, cid)] for g in classes)
        support = sum(counts[(cid, p)] for p in classes)
        precision = tp / predicted_count if predicted_count else 0.0
        recall = tp / support if support else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        f1s.append(f1)
        supports.append(support)
        metrics = report.per_class[cid]
        assert metrics.precision == precision
        assert metrics.recall == recall
        assert metrics.f1 == f1
        assert metrics.support == support
        assert metrics.predicted == predicted_count

    correct = sum(counts[(c, c)] for c in classes)
    assert report.accuracy == correct / 1000
    assert report.micro_f1 == report.accuracy
    assert report.macro_f1 == pytest.approx(sum(f1s) / len(classes), abs=1e-12)
    assert report.weighted_f1 == pytest.approx(
        sum(f * s for f, s in zip(f1s, supports)) / sum(supports), abs=1e-12
    )


# -- criterion 6: fill-mask hit rate is monotone in k ----------------------------


@pytest.mark.acceptance("fillmask-monotonicity")
def test_fillmask_hit_rate_monotone_in_k():
    _, backend, tokenizer = toy_stack()
    rng = np.random.default_rng(99)
    for trial in range(3):
        records = []
        for i in range(25):
            length = int(rng.integers(2, 7))
            tokens = [str(w) for w in rng.choice(WORDS, size=length)]
            gold = tokens[int(rng.integers(length))]
            records.append(
                FillMaskExample(
                    id=f"t{trial}-{i}", text=" ".join(tokens), masked_word=gold
                )
            )
        report = fillmask_topk(records, backend, tokenizer, range(1, VOCAB_TOTAL + 1))
        rates = [report.hit_rates[k] for k in range(1, VOCAB_TOTAL + 1)]
        assert all(later >= earlier for earlier, later in zip(rates, rates[1:]))
        assert rates[-1] == 1.0


# -- criterion 7: long documents truncate with the mask intact -------------------


@pytest.mark.acceptance("truncation")
def test_600_token_document_renders_within_512():
    vocab = make_vocab(WORDS, max_len=512)
    tokenizer = Tokenizer(vocab)
    template = Template.parse(TEMPLATE)
    rng = np.random.default_rng(5)
    text = " ".join(str(w) for w in rng.choice(WORDS, size=600))
    assert len(tokenizer.tokenize(text).ids) <= 512  # sanity: budget applies

    prompt = template.render(tokenizer, text)
    assert prompt.text_truncated is True
    assert len(prompt.ids) <= 512
    assert list(prompt.ids).count(vocab.mask_id) == 1
    assert prompt.ids[prompt.mask_position] == vocab.mask_id
    assert prompt.ids[0] == vocab.cls_id
    assert prompt.ids[-1] == vocab.sep_id


# -- criterion 8: end-to-end determinism ------------------------------------------


@pytest.mark.acceptance("e2e-determinism")
def test_two_pipeline_runs_are_byte_identical(syn_workspace, tmp_path):
    first = run_full_pipeline(syn_workspace, tmp_path / "one")
    second = run_full_pipeline(syn_workspace, tmp_path / "two")
    for name in ("verbalizer", "calibration", "predictions"):
        assert first[name].read_bytes() == second[name].read_bytes()


# -- end-to-end oracle and shipped-example smoke (unmarked extras) ----------------


def test_chained_pipeline_reproduces_planted_macro_f1(syn_workspace, tmp_path):
    artifacts = run_full_pipeline(syn_workspace, tmp_path / "run")
    eval_out = tmp_path / "eval"
    assert main(
        [
            "eval",
            "--predictions", str(artifacts["predictions"]),
            "--gold", syn_workspace["eval"],
            "--out", str(eval_out),
        ]
    ) == 0
    report = json.loads((eval_out / "report.json").read_text())
    assert report["total"] == 16
    assert report["macro_f1"] == pytest.approx(0.875, abs=1e-12)


def test_shipped_example_config_classifies_cleanly(tmp_path, monkeypatch):
    monkeypatch.chdir(REPO_ROOT)
    out = tmp_path / "out"
    code = main(
        [
            "--config", "demo/config.json",
            "classify",
            "--input", "demo/dataset.jsonl",
            "--out", str(out),
        ]
    )
    assert code == 0
    assert (out / "predictions.jsonl").exists()
    assert (out / "manifest.json").exists()
    assert not (out / "failures.jsonl").exists()

    eval_out = tmp_path / "eval"
    code = main(
        [
            "--config", "demo/config.json",
            "eval",
            "--predictions", str(out / "predictions.jsonl"),
            "--out", str(eval_out),
        ]
    )
    assert code == 0
    report = json.loads((eval_out / "report.json").read_text())
    assert report["macro_f1"] == pytest.approx(1.0)


def test_eval_without_gold_file_is_config_error(tmp_path, capsys):
    preds = tmp_path / "preds.jsonl"
    preds.write_text(json.dumps({"id": "1", "predicted": "A"}) + "\n")
    code = main(
        [
            "eval",
            "--predictions", str(preds),
            "--gold", str(tmp_path / "missing-gold.jsonl"),
            "--out", str(tmp_path / "out"),
        ]
    )
    assert code == 1
    assert "ConfigInvalid" in capsys.readouterr().err
