"""FastAPI service wrapping the classification engine.

The service computes over JSON payloads; the only filesystem access is
loading model bundles by path. Loaded bundles are cached in-process and
are immutable, so concurrent requests share them safely.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import calibration as calibration_mod
from ..backend import Bundle, load_bundle, validate_bundle
from ..errors import ConfigInvalid, EngineError
from ..fileio import _parse_fillmask, _parse_labeled, package_version
from ..kv import MiningConfig, build_kv
from ..metrics import evaluate, render_table
from ..pipeline import classify, fillmask_topk
from ..pll import pll_corpus
from ..template import DOC_TEMPLATE, ENTITY_TEMPLATE, Template
from ..tokenizer import Tokenizer
from ..verbalizer import parse_verbalizer, resolve
from . import schemas


class BundleRegistry:
    """Thread-safe cache of loaded bundles keyed by resolved path."""

    def __init__(self):
        self._bundles: dict[str, Bundle] = {}
        self._lock = threading.Lock()

    def get(self, path: str) -> Bundle:
        key = str(Path(path).resolve())
        with self._lock:
            if key not in self._bundles:
                self._bundles[key] = load_bundle(key)
            return self._bundles[key]

    def entries(self) -> list[Bundle]:
        with self._lock:
            return list(self._bundles.values())


def _pick_template(pattern: str | None, task: str) -> Template:
    if task not in ("doc", "entity"):
        raise ConfigInvalid(f"task must be 'doc' or 'entity', got {task!r}")
    if pattern:
        return Template.parse(pattern)
    return Template.parse(DOC_TEMPLATE if task == "doc" else ENTITY_TEMPLATE)


def _parse_records(raw_records, task: str):
    """Per-record validation; returns (examples, posted indices, failures)."""
    examples, positions, failures = [], [], []
    for index, obj in enumerate(raw_records):
        try:
            examples.append(_parse_labeled(obj, task))
            positions.append(index)
        except EngineError as exc:
            rid = obj.get("id") if isinstance(obj, dict) else None
            failures.append(
                schemas.RecordFailureOut(
                    index=index,
                    record_id=str(rid) if rid is not None else None,
                    reason=str(exc),
                )
            )
    return examples, positions, failures


def _resolve_calibration(
    spec: dict | None, template, verbalizer, backend, tokenizer, examples
):
    """Interpret the request's calibration field.

    None or {"mode":"identity"} mean no correction; a bare contextual or
    batch mode is fitted on the spot (batch uses the posted records); a
    full artifact dict is loaded as-is.
    """
    if spec is None:
        return None
    mode = spec.get("mode")
    data_keys = set(spec) - {"mode", "content_free"}
    if mode == "identity" and not data_keys:
        return calibration_mod.IDENTITY
    if mode == "contextual" and not data_keys:
        return calibration_mod.fit_contextual(
            template,
            verbalizer,
            backend,
            tokenizer,
            content_free=str(spec.get("content_free", "")),
        )
    if mode == "batch" and not data_keys:
        items = []
        for record in examples:
            try:
                template.render(tokenizer, record.text, entity=record.entity)
            except EngineError:
                continue  # the classify pass will report this record
            items.append(
                (record.text, record.entity) if record.entity else record.text
            )
        return calibration_mod.fit_batch(
            template, verbalizer, backend, tokenizer, items
        )
    return calibration_mod.CalibrationState.from_dict(spec)


def create_app(registry: BundleRegistry | None = None) -> FastAPI:
    registry = registry or BundleRegistry()
    app = FastAPI(title="clozecast", version=package_version())

    @app.exception_handler(EngineError)
    async def _engine_error(_request: Request, exc: EngineError):
        return JSONResponse(
            status_code=422,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.exception_handler(FileNotFoundError)
    async def _not_found(_request: Request, exc: FileNotFoundError):
        return JSONResponse(
            status_code=404,
            content={"error": "FileNotFound", "detail": str(exc)},
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=package_version())

    # -- bundles ---------------------------------------------------------

    def _entry(bundle: Bundle) -> schemas.BundleEntry:
        return schemas.BundleEntry(
            path=str(bundle.path),
            kind=bundle.kind,
            vocab_size=bundle.vocab.size,
            max_len=bundle.vocab.max_len,
        )

    @app.post("/bundles/load", response_model=schemas.BundleEntry)
    def bundles_load(body: schemas.BundlePath):
        return _entry(registry.get(body.path))

    @app.get("/bundles", response_model=schemas.BundleList)
    def bundles_list():
        return schemas.BundleList(bundles=[_entry(b) for b in registry.entries()])

    @app.post("/bundles/validate", response_model=schemas.ValidationReport)
    def bundles_validate(body: schemas.BundlePath):
        return schemas.ValidationReport(**validate_bundle(body.path))

    # -- classify --------------------------------------------------------

    @app.post("/classify", response_model=schemas.ClassifyResponse)
    def classify_endpoint(body: schemas.ClassifyRequest):
        bundle = registry.get(body.bundle)
        tokenizer = Tokenizer(bundle.vocab)
        template = _pick_template(body.template, body.task)
        verbalizer = resolve(parse_verbalizer(body.verbalizer), tokenizer)
        examples, positions, failures = _parse_records(body.records, body.task)
        state = _resolve_calibration(
            body.calibration, template, verbalizer, bundle.backend, tokenizer, examples
        )
        result = classify(
            examples, template, verbalizer, bundle.backend, state, tokenizer
        )
        for failure in result.failures:
            failures.append(
                schemas.RecordFailureOut(
                    index=positions[failure.index],
                    record_id=failure.record_id,
                    reason=failure.reason,
                )
            )
        failures.sort(key=lambda f: (f.index is None, f.index))
        return schemas.ClassifyResponse(
            predictions=[
                schemas.PredictionOut(
                    id=p.id, predicted=p.predicted, scores=p.scores
                )
                for p in result.predictions
            ],
            failures=failures,
            calibration_mode=state.mode if state is not None else "identity",
        )

    # -- calibrate ---------------------------------------------------------

    @app.post("/calibrate", response_model=schemas.CalibrateResponse)
    def calibrate_endpoint(body: schemas.CalibrateRequest):
        if body.mode not in ("contextual", "batch"):
            raise ConfigInvalid(
                f"calibrate mode must be 'contextual' or 'batch', got {body.mode!r}"
            )
        bundle = registry.get(body.bundle)
        tokenizer = Tokenizer(bundle.vocab)
        template = _pick_template(body.template, body.task)
        verbalizer = resolve(parse_verbalizer(body.verbalizer), tokenizer)
        examples, positions, failures = _parse_records(body.records, body.task)
        if body.mode == "contextual":
            state = calibration_mod.fit_contextual(
                template,
                verbalizer,
                bundle.backend,
                tokenizer,
                content_free=body.content_free,
            )
        else:
            items = []
            for index, record in zip(positions, examples):
                try:
                    template.render(tokenizer, record.text, entity=record.entity)
                except EngineError as exc:
                    failures.append(
                        schemas.RecordFailureOut(
                            index=index, record_id=record.id, reason=str(exc)
                        )
                    )
                    continue
                items.append(
                    (record.text, record.entity) if record.entity else record.text
                )
            state = calibration_mod.fit_batch(
                template, verbalizer, bundle.backend, tokenizer, items
            )
        return schemas.CalibrateResponse(state=state.to_dict(), failures=failures)

    # -- build-kv ----------------------------------------------------------

    @app.post("/build_kv", response_model=schemas.BuildKVResponse)
    def build_kv_endpoint(body: schemas.BuildKVRequest):
        bundle = registry.get(body.bundle)
        tokenizer = Tokenizer(bundle.vocab)
        template = _pick_template(body.template, body.task)
        examples, _positions, failures = _parse_records(body.records, body.task)
        cfg = MiningConfig(
            synonyms={cid: tuple(seeds) for cid, seeds in body.seeds.items()},
            stopwords=frozenset(body.stopwords),
            candidates_per_occurrence=body.candidates_per_occurrence,
            cv_size=body.cv_size,
            info_threshold=body.info_threshold,
            freq_threshold=body.freq_threshold,
        )
        result = build_kv(examples, template, bundle.backend, tokenizer, cfg)
        return schemas.BuildKVResponse(
            verbalizer=result.verbalizer.to_dict(),
            class_vocabularies={
                cid: [[surface, count] for surface, count in cv.entries]
                for cid, cv in result.cv.items()
            },
            kb=result.kb,
            hit_counts=result.hit_counts,
            survivor_counts=result.survivor_counts,
            no_occurrence_classes=list(result.no_occurrence_classes),
            fallback_classes=list(result.fallback_classes),
            failures=failures,
        )

    # -- pll ---------------------------------------------------------------

    @app.post("/pll", response_model=schemas.PLLResponse)
    def pll_endpoint(body: schemas.PLLRequest):
        bundle = registry.get(body.bundle)
        tokenizer = Tokenizer(bundle.vocab)
        corpus = pll_corpus(
            [s.text for s in body.sentences], bundle.backend, tokenizer
        )
        reasons = dict(corpus.failures)
        sentences = []
        for index, (sentence, result) in enumerate(
            zip(body.sentences, corpus.results)
        ):
            if result is None:
                sentences.append(
                    schemas.PLLSentenceOut(id=sentence.id, error=reasons[index])
                )
            else:
                sentences.append(
                    schemas.PLLSentenceOut(
                        id=sentence.id,
                        raw=result.raw,
                        normalized=result.normalized,
                        tokens=result.token_count,
                    )
                )
        return schemas.PLLResponse(
            sentences=sentences,
            summary=schemas.PLLSummary(
                mean=corpus.mean,
                std=corpus.std,
                std_convention="population",
                sentences=corpus.sentence_count,
                failures=corpus.failure_count,
            ),
        )

    # -- fillmask ------------------------------------------------------------

    @app.post("/fillmask", response_model=schemas.FillMaskResponse)
    def fillmask_endpoint(body: schemas.FillMaskRequest):
        bundle = registry.get(body.bundle)
        tokenizer = Tokenizer(bundle.vocab)
        examples, positions, failures = [], [], []
        for index, obj in enumerate(body.records):
            try:
                examples.append(_parse_fillmask(obj))
                positions.append(index)
            except EngineError as exc:
                rid = obj.get("id") if isinstance(obj, dict) else None
                failures.append(
                    schemas.RecordFailureOut(
                        index=index,
                        record_id=str(rid) if rid is not None else None,
                        reason=str(exc),
                    )
                )
        report = fillmask_topk(examples, bundle.backend, tokenizer, body.k)
        for skip in report.skipped:
            failures.append(
                schemas.RecordFailureOut(
                    index=positions[skip.index],
                    record_id=skip.record_id,
                    reason=skip.reason,
                )
            )
        failures.sort(key=lambda f: (f.index is None, f.index))
        return schemas.FillMaskResponse(
            hit_rates={str(k): rate for k, rate in report.hit_rates.items()},
            evaluated=report.evaluated,
            ranks=[
                schemas.RankedRecord(id=rid, rank=rank) for rid, rank in report.ranks
            ],
            skipped=failures,
        )

    # -- eval -----------------------------------------------------------------

    @app.post("/eval", response_model=schemas.EvalResponse)
    def eval_endpoint(body: schemas.EvalRequest):
        report = evaluate(body.pairs, body.gold, classes=body.classes)
        table, csv_text = render_table([(body.name, report)])
        return schemas.EvalResponse(report=report.to_dict(), table=table, csv=csv_text)

    return app


app = create_app()
