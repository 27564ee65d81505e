"""Regenerate the shipped verbalizer configs and the demo bundle.

Run from the repository root: python3 scripts/make_assets.py
"""

import hashlib
import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def verbalizer(kind: str, classes: dict[str, list[str]]) -> dict:
    return {
        "kind": kind,
        "classes": [
            {"id": cid, "words": [{"surface": w} for w in words]}
            for cid, words in classes.items()
        ],
    }


def dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    print(f"wrote {path.relative_to(ROOT)}")


# -- Italian public-administration document topics ---------------------------

PA_DOC_BASE = {
    "Ambiente": ["ambiente"],
    "Avvocatura": ["avvocatura"],
    "Bandi e contratti": ["bandi", "contratti"],
    "Commercio e attività economiche": ["commercio", "attività", "economiche"],
    "Cultura, turismo e sport": ["cultura", "turismo", "sport"],
    "Demografico": ["demografico"],
    "Edilizia": ["edilizia"],
    "Personale": ["personale"],
    "Pubblica istruzione": ["istruzione"],
    "Servizi informativi": ["servizi", "informazioni"],
    "Servizio finanziario": ["finanza"],
    "Sociale": ["sociale"],
    "Urbanistica": ["urbanistica"],
}

PA_DOC_MANUAL = {
    "Ambiente": [
        "ambiente", "natura", "territorio", "flora", "fauna", "animali",
        "clima", "inquinamento", "rifiuti", "igiene", "caccia", "pesca",
        "verde", "ecologia", "agricoltura", "acque",
    ],
    "Avvocatura": [
        "avvocatura", "avvocati", "giustizia", "legale", "ricorso", "giudici",
        "Tribunale", "Corte", "Appello", "Assise", "notifica", "atti", "Albo",
        "Pretorio", "protocollo",
    ],
    "Bandi e contratti": [
        "bandi", "contratti", "bando", "contratto", "gara", "appalto",
        "assunzione", "liquidazione",
    ],
    "Commercio e attività economiche": [
        "commercio", "economia", "attività", "economica", "beni",
        "commerciare", "vendite", "acquisti", "commercianti", "confesercenti",
    ],
    "Cultura, turismo e sport": [
        "cultura", "turismo", "sport", "culturale", "turisti", "musei",
        "arte", "cinema", "vacanze", "spettacolo", "scuola", "manifestazioni",
    ],
    "Demografico": [
        "demografico", "popolazione", "abitanti", "residenti", "censimento",
        "anagrafe", "residenza", "domicilio", "cittadinanza", "leva",
    ],
    "Edilizia": [
        "edilizia", "costruzioni", "cantiere", "ristrutturazione",
        "planimetrie", "residenziale",
    ],
    "Personale": [
        "personale", "risorse", "umane", "assunzioni", "lavoro", "part-time",
    ],
    "Pubblica istruzione": [
        "istruzione", "istituto", "scolatisco", "scuola", "insegnante",
        "formazione", "educazione",
    ],
    "Servizi informativi": ["servizi", "informazioni", "informativi"],
    "Servizio finanziario": [
        "finanza", "euro", "finanziario", "contabilità", "contabile",
        "copertura", "rimborsi", "pagamenti", "versamenti", "bilancio",
        "spese", "sanzioni", "multe", "tributi", "retribuzioni", "emolumenti",
    ],
    "Sociale": [
        "sociale", "leva", "militare", "disabili", "protezione", "civile",
        "invalidi",
    ],
    "Urbanistica": [
        "urbanistica", "trasporti", "trasporto", "traffico", "circolazione",
        "veicoli", "viabilità", "viaria",
    ],
}

# -- Italian public-administration entity types ------------------------------

PA_ENTITY_BASE = {
    "PER": ["persona"],
    "LOC": ["luogo"],
    "ORG": ["organizzazione"],
    "LAW": ["legge"],
    "ACT": ["atto"],
    "OPA": ["ufficio"],
}

PA_ENTITY_MANUAL = {
    "PER": ["persona", "generalità", "nominativo"],
    "LOC": ["luogo", "località"],
    "ORG": ["organizzazione", "azienda", "società", "associazione", "compagnia"],
    "LAW": ["legge", "norma", "decreto", "legislativo"],
    "ACT": ["atto", "delibera", "determina", "deliberazione", "regolamento"],
    "OPA": ["ufficio"],
}

# -- Italian civil-judgment topics and entity types ---------------------------

LEGAL_DOC_BASE = {
    "Polizia locale": ["polizia", "locale"],
    "Edilizia e urbanistica": ["edilizia", "urbanistica"],
    "Attività economiche": ["economia"],
    "Appalti e contratti": ["appalti", "contratti"],
    "Servizi demografici": ["demografia"],
    "Tributi locali": ["tributi"],
    "Personale": ["personale"],
    "Bilancio e contabilità": ["bilancio", "contabilità"],
    "Amm. e segreteria generale": ["amministrazione", "segreteria"],
}

LEGAL_ENTITY_BASE = {
    "JDG": ["giudice"],
    "LAW": ["legge"],
    "LWY": ["avvocato"],
    "RUL": ["sentenza"],
}


def write_verbalizers() -> None:
    base = ROOT / "configs" / "verbalizers"
    dump(base / "pa_doc_base.json", verbalizer("base", PA_DOC_BASE))
    dump(base / "pa_doc_manual.json", verbalizer("manual", PA_DOC_MANUAL))
    dump(base / "pa_entity_base.json", verbalizer("base", PA_ENTITY_BASE))
    dump(base / "pa_entity_manual.json", verbalizer("manual", PA_ENTITY_MANUAL))
    dump(base / "legal_doc_base.json", verbalizer("base", LEGAL_DOC_BASE))
    dump(base / "legal_entity_base.json", verbalizer("base", LEGAL_ENTITY_BASE))


# -- demo bundle ----------------------------------------------------------------

DEMO_VOCAB = [
    "[PAD]", "[UNK]", "[MASK]", "[CLS]", "[SEP]",
    ".", ",", "'",
    "questo", "documento", "parla", "di", "il", "la", "le", "i", "e",
    "per", "del", "dei", "delle", "un", "una", "in", "frase", "questa",
    "esempio", "è",
    "comune", "delibera", "approva", "gestione", "servizio", "nuovo",
    "ambiente", "natura", "rifiuti", "verde", "acque", "raccolta",
    "finanza", "bilancio", "pagamenti", "spese", "tributi", "contabile",
    "cultura", "arte", "sport", "mostra", "musei", "impianto", "sportivo",
    "teatro", "festival",
]

DEMO_RULES = {
    "rules": [
        {"when": {"contains": "rifiuti"}, "probs": {"ambiente": 0.55, "natura": 0.15}},
        {"when": {"contains": "verde"}, "probs": {"ambiente": 0.5, "natura": 0.2}},
        {"when": {"contains": "acque"}, "probs": {"ambiente": 0.5}},
        {"when": {"contains": "tributi"}, "probs": {"finanza": 0.55, "bilancio": 0.15}},
        {"when": {"contains": "spese"}, "probs": {"finanza": 0.5, "bilancio": 0.2}},
        {"when": {"contains": "pagamenti"}, "probs": {"finanza": 0.5}},
        {"when": {"contains": "mostra"}, "probs": {"cultura": 0.5, "arte": 0.2}},
        {"when": {"contains": "sportivo"}, "probs": {"cultura": 0.4, "sport": 0.3}},
        {"when": {"contains": "teatro"}, "probs": {"cultura": 0.5}},
        {"when": {"prev": "di"}, "probs": {"documento": 0.1, "comune": 0.1}},
    ],
    "default": {"probs": {}},
}

DEMO_VERBALIZER = {
    "Ambiente": ["ambiente", "natura"],
    "Servizio finanziario": ["finanza", "bilancio"],
    "Cultura e sport": ["cultura", "arte", "sport"],
}

DEMO_DATASET = [
    {"id": "doc-1", "text": "il comune approva la gestione dei rifiuti", "label": "Ambiente"},
    {"id": "doc-2", "text": "questo documento parla delle spese e dei pagamenti", "label": "Servizio finanziario"},
    {"id": "doc-3", "text": "la mostra di arte e la cultura del comune", "label": "Cultura e sport"},
    {"id": "doc-4", "text": "il comune delibera per il verde e le acque", "label": "Ambiente"},
    {"id": "doc-5", "text": "il bilancio e i tributi del comune", "label": "Servizio finanziario"},
    {"id": "doc-6", "text": "il nuovo impianto sportivo e il teatro", "label": "Cultura e sport"},
]


def write_demo() -> None:
    demo = ROOT / "demo"
    bundle = demo / "bundle"
    bundle.mkdir(parents=True, exist_ok=True)
    (bundle / "vocab.txt").write_text("\n".join(DEMO_VOCAB) + "\n", encoding="utf-8")
    toy_text = json.dumps(DEMO_RULES, indent=2, ensure_ascii=False) + "\n"
    (bundle / "toy.json").write_text(toy_text, encoding="utf-8")
    meta = {
        "mask_id": DEMO_VOCAB.index("[MASK]"),
        "pad_id": DEMO_VOCAB.index("[PAD]"),
        "unk_id": DEMO_VOCAB.index("[UNK]"),
        "cls_id": DEMO_VOCAB.index("[CLS]"),
        "sep_id": DEMO_VOCAB.index("[SEP]"),
        "max_len": 64,
        "subtoken_marker": "##",
        "lowercase": False,
        "graph_sha256": hashlib.sha256(toy_text.encode("utf-8")).hexdigest(),
    }
    dump(bundle / "meta.json", meta)
    print(f"wrote {bundle.relative_to(ROOT)}/vocab.txt and toy.json")

    dump(demo / "verbalizer.json", verbalizer("manual", DEMO_VERBALIZER))
    (demo / "dataset.jsonl").write_text(
        "\n".join(json.dumps(r, ensure_ascii=False) for r in DEMO_DATASET) + "\n",
        encoding="utf-8",
    )
    print(f"wrote {(demo / 'dataset.jsonl').relative_to(ROOT)}")
    dump(
        demo / "config.json",
        {
            "common": {"bundle": "demo/bundle"},
            "templates": [
                {
                    "name": "doc-it",
                    "pattern": "{text}. Questo documento parla di {mask}.",
                    "task": "doc",
                }
            ],
            "classify": {
                "task": "doc",
                "verbalizer": "demo/verbalizer.json",
                "calibration": "contextual",
            },
            "eval": {"gold": "demo/dataset.jsonl"},
        },
    )


if __name__ == "__main__":
    write_verbalizers()
    write_demo()
