"""Command-line interface.

The CLI is a thin client: it reads and validates local files, sends the
records to the engine service (in-process by default, or a remote server
via ``--url``), and writes the returned artifacts atomically alongside a
``manifest.json`` recording inputs, outputs, and parameters.

Exit codes: 0 on success, 1 on fatal configuration or I/O errors, 2 when
the run completed but some records failed and were skipped.

Set ``CLOZECAST_THREADS`` to an integer greater than 1 to let the engine
score independent records concurrently (order-preserving); the variable
is read by the process doing the compute, so for ``--url`` it must be
set on the server.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import click

from . import fileio
from .calibration import MODES
from .client import EngineClient
from .errors import ConfigInvalid, EngineError
from .verbalizer import base_verbalizer, load_verbalizer

_CALIBRATION_KEYWORDS = ("none", "identity", "contextual", "batch")


# -- configuration ------------------------------------------------------------


class Settings:
    """Layered option lookup: flag > subcommand section > common > default."""

    def __init__(self, config: dict, url: str | None):
        self.config = config
        self.url = url if url is not None else config.get("common", {}).get("url")

    @classmethod
    def from_file(cls, path: str | None, url: str | None) -> "Settings":
        if path is None:
            return cls({}, url)
        try:
            raw = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config file {path}: {exc}") from exc
        try:
            config = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigInvalid("config root must be a JSON object")
        for section, value in config.items():
            if section == "templates":
                continue
            if not isinstance(value, dict):
                raise ConfigInvalid(f"config section {section!r} must be an object")
        return cls(config, url)

    def get(self, section: str, key: str, flag_value, default=None):
        if flag_value is not None:
            return flag_value
        sub = self.config.get(section)
        if isinstance(sub, dict) and key in sub:
            return sub[key]
        common = self.config.get("common")
        if isinstance(common, dict) and key in common:
            return common[key]
        return default

    def template_pattern(self, value: str | None) -> str | None:
        """Resolve --template: a literal pattern, or a name from the config.

        Returns ``None`` to let the service pick the default for the task.
        """
        if value is None:
            return None
        if "{mask}" in value:
            return value
        entries = self.config.get("templates", [])
        if not isinstance(entries, list):
            raise ConfigInvalid("config 'templates' must be a list of objects")
        names = []
        for entry in entries:
            if not isinstance(entry, dict) or "name" not in entry:
                raise ConfigInvalid("each template entry needs a 'name'")
            names.append(entry["name"])
            if entry["name"] == value:
                pattern = entry.get("pattern")
                if not isinstance(pattern, str):
                    raise ConfigInvalid(
                        f"template {value!r} has no 'pattern' string"
                    )
                return pattern
        raise ConfigInvalid(
            f"unknown template {value!r}; not a pattern (no '{{mask}}') and "
            f"not among configured names {names!r}"
        )


def _settings(ctx: click.Context) -> Settings:
    return ctx.obj


def _client(settings: Settings) -> EngineClient:
    return EngineClient(url=settings.url)


def _resolve_verbalizer(
    settings: Settings, section: str, verbalizer: str | None, classes: str | None
) -> dict:
    verbalizer = settings.get(section, "verbalizer", verbalizer)
    classes = settings.get(section, "classes", classes)
    if verbalizer is not None:
        return load_verbalizer(verbalizer).to_dict()
    if classes is not None:
        if isinstance(classes, str):
            class_ids = [c.strip() for c in classes.split(",") if c.strip()]
        else:
            class_ids = [str(c) for c in classes]
        return base_verbalizer(class_ids).to_dict()
    raise ConfigInvalid(
        "no verbalizer: pass --verbalizer FILE or --classes to use class "
        "names as label words"
    )


def _resolve_calibration(value: str | None) -> dict | None:
    """Map --calibration to the request field.

    Keywords select a mode ('none'/'identity' disable it; 'contextual' and
    'batch' are fitted on the fly); anything else is read as a saved
    calibration file.
    """
    if value is None or value in ("none", "identity"):
        return None
    if value in ("contextual", "batch"):
        return {"mode": value}
    path = Path(value)
    if not path.is_file():
        raise ConfigInvalid(
            f"--calibration {value!r} is neither one of "
            f"{_CALIBRATION_KEYWORDS} nor an existing file"
        )
    try:
        state = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"calibration file {value} is not valid JSON: {exc}")
    if not isinstance(state, dict):
        raise ConfigInvalid("calibration file root must be a JSON object")
    return state


def _record_dict(example: fileio.LabeledExample) -> dict:
    record: dict = {"id": example.id, "text": example.text}
    if example.entity is not None:
        record["entity"] = example.entity
    if example.label is not None:
        record["label"] = example.label
    return record


def _failure_lines(failures: list[dict]) -> str:
    lines = []
    for failure in failures:
        row = {}
        for key in ("line", "index", "record_id", "reason"):
            if failure.get(key) is not None:
                row[key] = failure[key]
        lines.append(json.dumps(row, ensure_ascii=False))
    return "\n".join(lines) + "\n" if lines else ""


def _merge_failures(
    file_failures: list[fileio.RecordFailure], service_failures: list[dict]
) -> list[dict]:
    merged = [
        {"line": f.line, "record_id": f.record_id, "reason": f.reason}
        for f in file_failures
    ]
    merged.extend(service_failures)
    return merged


def _write_failures(out_dir: Path, failures: list[dict]) -> dict[str, str]:
    if not failures:
        return {}
    path = out_dir / "failures.jsonl"
    fileio.atomic_write_text(path, _failure_lines(failures))
    for failure in failures:
        click.echo(f"warning: skipped record: {json.dumps(failure)}", err=True)
    return {"failures": str(path)}


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


def _finish(
    out_dir: Path,
    subcommand: str,
    inputs: dict[str, str],
    outputs: dict[str, str],
    parameters: dict,
    failures: list[dict],
) -> int:
    outputs = dict(outputs)
    outputs.update(_write_failures(out_dir, failures))
    fileio.write_manifest(out_dir, subcommand, inputs, outputs, parameters)
    return 2 if failures else 0


# -- root group ----------------------------------------------------------------


@click.group(name="clozecast")
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="JSON config file with per-subcommand option sections.",
)
@click.option("--url", default=None, help="Base URL of a running engine service.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, url: str | None):
    """Zero-shot classification over masked-language-model bundles."""
    ctx.obj = Settings.from_file(config_path, url)


# -- classify -------------------------------------------------------------------


@cli.command()
@click.option("--bundle", default=None, help="Model bundle directory.")
@click.option(
    "--input", "input_path", default=None, help="Dataset JSONL (one record per line)."
)
@click.option("--out", "out_dir", default=None, help="Output directory.")
@click.option("--task", default=None, type=click.Choice(["doc", "entity"]))
@click.option(
    "--template",
    default=None,
    help="Prompt pattern (contains '{mask}') or a template name from the config.",
)
@click.option("--verbalizer", default=None, help="Verbalizer JSON file.")
@click.option(
    "--classes",
    default=None,
    help="Comma-separated class ids; uses each class name as its label word.",
)
@click.option(
    "--calibration",
    default=None,
    help="none | contextual | batch | path to a saved calibration file.",
)
@click.option(
    "--content-free",
    default=None,
    help="Input used to fit contextual calibration (default: empty).",
)
@click.pass_context
def classify(
    ctx, bundle, input_path, out_dir, task, template, verbalizer, classes,
    calibration, content_free,
):
    """Predict a class for every record and write predictions.jsonl."""
    settings = _settings(ctx)
    bundle = settings.get("classify", "bundle", bundle)
    input_path = settings.get("classify", "input", input_path)
    out_dir = settings.get("classify", "out", out_dir)
    task = settings.get("classify", "task", task, "doc")
    template = settings.template_pattern(
        settings.get("classify", "template", template)
    )
    calibration = settings.get("classify", "calibration", calibration, "none")
    content_free = settings.get("classify", "content_free", content_free, "")
    if not bundle or not input_path or not out_dir:
        raise ConfigInvalid("classify needs --bundle, --input, and --out")
    verbalizer_dict = _resolve_verbalizer(settings, "classify", verbalizer, classes)
    calibration_request = _resolve_calibration(calibration)

    examples, file_failures = fileio.read_dataset(input_path, task)
    if not examples and not file_failures:
        raise ConfigInvalid(f"input file {input_path} contains no records")
    records = [_record_dict(e) for e in examples]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, str] = {}

    with _client(settings) as client:
        # Fit requested calibration up front so the state is saved as an
        # artifact and the classify pass consumes the exact same state.
        if calibration_request is not None and set(calibration_request) == {"mode"}:
            fit = client.calibrate(
                bundle,
                calibration_request["mode"],
                verbalizer_dict,
                task=task,
                template=template,
                content_free=content_free,
                records=records,
            )
            calibration_request = fit["state"]
            calibration_path = out / "calibration.json"
            fileio.atomic_write_text(
                calibration_path, _json_text(calibration_request)
            )
            outputs["calibration"] = str(calibration_path)
        response = client.classify(
            bundle,
            records,
            verbalizer_dict,
            task=task,
            template=template,
            calibration=calibration_request,
        )

    predictions_path = out / "predictions.jsonl"
    lines = [
        json.dumps(
            {"id": p["id"], "predicted": p["predicted"], "scores": p["scores"]},
            ensure_ascii=False,
        )
        for p in response["predictions"]
    ]
    fileio.atomic_write_text(
        predictions_path, "\n".join(lines) + "\n" if lines else ""
    )
    outputs["predictions"] = str(predictions_path)

    failures = _merge_failures(file_failures, response["failures"])
    return _finish(
        out,
        "classify",
        {"dataset": str(input_path)},
        outputs,
        {
            "bundle": str(bundle),
            "task": task,
            "template": template,
            "calibration": calibration,
            "calibration_mode": response["calibration_mode"],
            "records": len(records),
        },
        failures,
    )


# -- build-kv --------------------------------------------------------------------


@cli.command("build-kv")
@click.option("--bundle", default=None)
@click.option("--input", "input_path", default=None, help="Labeled dataset JSONL.")
@click.option("--out", "out_dir", default=None)
@click.option("--task", default=None, type=click.Choice(["doc", "entity"]))
@click.option("--template", default=None)
@click.option(
    "--seeds",
    default=None,
    help="JSON file mapping each class id to extra seed surfaces.",
)
@click.option(
    "--stopwords", default=None, help="Text file with one stopword per line."
)
@click.option("--candidates-per-occurrence", default=None, type=int)
@click.option("--cv-size", default=None, type=int)
@click.option("--info-threshold", default=None, type=int)
@click.option("--freq-threshold", default=None, type=float)
@click.pass_context
def build_kv(
    ctx, bundle, input_path, out_dir, task, template, seeds, stopwords,
    candidates_per_occurrence, cv_size, info_threshold, freq_threshold,
):
    """Mine label words from a labeled corpus and write a verbalizer."""
    settings = _settings(ctx)
    section = "build-kv"
    bundle = settings.get(section, "bundle", bundle)
    input_path = settings.get(section, "input", input_path)
    out_dir = settings.get(section, "out", out_dir)
    task = settings.get(section, "task", task, "doc")
    template = settings.template_pattern(settings.get(section, "template", template))
    seeds = settings.get(section, "seeds", seeds)
    stopwords = settings.get(section, "stopwords", stopwords)
    candidates_per_occurrence = settings.get(
        section, "candidates_per_occurrence", candidates_per_occurrence, 50
    )
    cv_size = settings.get(section, "cv_size", cv_size, 100)
    info_threshold = settings.get(section, "info_threshold", info_threshold, 20)
    freq_threshold = settings.get(section, "freq_threshold", freq_threshold)
    if not bundle or not input_path or not out_dir or seeds is None:
        raise ConfigInvalid("build-kv needs --bundle, --input, --out, and --seeds")

    if isinstance(seeds, str):
        try:
            seeds = json.loads(Path(seeds).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigInvalid(f"cannot read seeds file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"seeds file is not valid JSON: {exc}") from exc
    if not isinstance(seeds, dict):
        raise ConfigInvalid("seeds must be an object mapping class id to a list")
    seeds = {str(k): [str(s) for s in v] for k, v in seeds.items()}
    if isinstance(stopwords, str):
        try:
            stopwords = [
                line.strip()
                for line in Path(stopwords).read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
        except OSError as exc:
            raise ConfigInvalid(f"cannot read stopwords file: {exc}") from exc
    stopwords = [str(s) for s in (stopwords or [])]

    examples, file_failures = fileio.read_dataset(input_path, task)
    if not examples and not file_failures:
        raise ConfigInvalid(f"input file {input_path} contains no records")
    records = [_record_dict(e) for e in examples]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with _client(settings) as client:
        response = client.build_kv(
            bundle,
            records,
            seeds,
            stopwords=stopwords,
            task=task,
            template=template,
            candidates_per_occurrence=candidates_per_occurrence,
            cv_size=cv_size,
            info_threshold=info_threshold,
            freq_threshold=freq_threshold,
        )

    outputs = {}
    for name, payload in (
        ("verbalizer", response["verbalizer"]),
        ("cv", response["class_vocabularies"]),
        ("kb", response["kb"]),
        (
            "report",
            {
                "hit_counts": response["hit_counts"],
                "survivor_counts": response["survivor_counts"],
                "no_occurrence_classes": response["no_occurrence_classes"],
                "fallback_classes": response["fallback_classes"],
            },
        ),
    ):
        path = out / f"{name}.json"
        fileio.atomic_write_text(path, _json_text(payload))
        outputs[name] = str(path)

    failures = _merge_failures(file_failures, response["failures"])
    return _finish(
        out,
        "build-kv",
        {"dataset": str(input_path)},
        outputs,
        {
            "bundle": str(bundle),
            "task": task,
            "template": template,
            "seeds": seeds,
            "stopwords": sorted(stopwords),
            "candidates_per_occurrence": candidates_per_occurrence,
            "cv_size": cv_size,
            "info_threshold": info_threshold,
            "freq_threshold": freq_threshold,
        },
        failures,
    )


# -- calibrate ---------------------------------------------------------------------


@cli.command()
@click.option("--bundle", default=None)
@click.option("--mode", default=None, type=click.Choice(["contextual", "batch"]))
@click.option("--verbalizer", default=None, help="Verbalizer JSON file.")
@click.option("--classes", default=None, help="Comma-separated class ids.")
@click.option("--task", default=None, type=click.Choice(["doc", "entity"]))
@click.option("--template", default=None)
@click.option("--content-free", default=None, help="Contextual fitting input.")
@click.option(
    "--input", "input_path", default=None, help="Unlabeled JSONL for batch fitting."
)
@click.option("--out", "out_dir", default=None)
@click.pass_context
def calibrate(
    ctx, bundle, mode, verbalizer, classes, task, template, content_free,
    input_path, out_dir,
):
    """Fit a calibration state and write it to calibration.json."""
    settings = _settings(ctx)
    bundle = settings.get("calibrate", "bundle", bundle)
    mode = settings.get("calibrate", "mode", mode)
    task = settings.get("calibrate", "task", task, "doc")
    template = settings.template_pattern(
        settings.get("calibrate", "template", template)
    )
    content_free = settings.get("calibrate", "content_free", content_free, "")
    input_path = settings.get("calibrate", "input", input_path)
    out_dir = settings.get("calibrate", "out", out_dir)
    if not bundle or not out_dir or mode is None:
        raise ConfigInvalid("calibrate needs --bundle, --mode, and --out")
    if mode not in MODES or mode == "identity":
        raise ConfigInvalid(f"mode must be 'contextual' or 'batch', got {mode!r}")
    verbalizer_dict = _resolve_verbalizer(settings, "calibrate", verbalizer, classes)

    file_failures: list[fileio.RecordFailure] = []
    records: list[dict] = []
    if mode == "batch":
        if not input_path:
            raise ConfigInvalid("batch calibration needs --input records")
        examples, file_failures = fileio.read_dataset(input_path, task)
        records = [_record_dict(e) for e in examples]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with _client(settings) as client:
        response = client.calibrate(
            bundle,
            mode,
            verbalizer_dict,
            task=task,
            template=template,
            content_free=content_free,
            records=records,
        )

    path = out / "calibration.json"
    fileio.atomic_write_text(path, _json_text(response["state"]))
    failures = _merge_failures(file_failures, response["failures"])
    inputs = {"dataset": str(input_path)} if input_path else {}
    return _finish(
        out,
        "calibrate",
        inputs,
        {"calibration": str(path)},
        {
            "bundle": str(bundle),
            "mode": mode,
            "task": task,
            "template": template,
            "content_free": content_free,
        },
        failures,
    )


# -- pll ------------------------------------------------------------------------------


@cli.command()
@click.option("--bundle", default=None)
@click.option(
    "--input",
    "input_path",
    default=None,
    help="Sentences: JSONL with id/text, or plain text (one per line).",
)
@click.option("--out", "out_dir", default=None)
@click.pass_context
def pll(ctx, bundle, input_path, out_dir):
    """Score sentence pseudo-log-likelihoods; write pll.csv and summary.json."""
    settings = _settings(ctx)
    bundle = settings.get("pll", "bundle", bundle)
    input_path = settings.get("pll", "input", input_path)
    out_dir = settings.get("pll", "out", out_dir)
    if not bundle or not input_path or not out_dir:
        raise ConfigInvalid("pll needs --bundle, --input, and --out")

    pairs = fileio.read_sentences(input_path)
    if not pairs:
        raise ConfigInvalid(f"input file {input_path} contains no sentences")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with _client(settings) as client:
        response = client.pll(
            bundle, [{"id": sid, "text": text} for sid, text in pairs]
        )

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["sentence_id", "raw", "normalized", "tokens"])
    failures: list[dict] = []
    for index, row in enumerate(response["sentences"]):
        if row.get("error"):
            failures.append(
                {"index": index, "record_id": row["id"], "reason": row["error"]}
            )
            continue
        writer.writerow([row["id"], row["raw"], row["normalized"], row["tokens"]])
    csv_path = out / "pll.csv"
    fileio.atomic_write_text(csv_path, buffer.getvalue())
    summary_path = out / "summary.json"
    fileio.atomic_write_text(summary_path, _json_text(response["summary"]))

    return _finish(
        out,
        "pll",
        {"sentences": str(input_path)},
        {"pll": str(csv_path), "summary": str(summary_path)},
        {"bundle": str(bundle), "sentences": len(pairs)},
        failures,
    )


# -- fillmask ----------------------------------------------------------------------------


@cli.command()
@click.option("--bundle", default=None)
@click.option(
    "--input",
    "input_path",
    default=None,
    help="JSONL records with id, text, and masked_word.",
)
@click.option("--out", "out_dir", default=None)
@click.option("--k", "k_spec", default=None, help="Comma-separated cutoffs (1,5,10).")
@click.pass_context
def fillmask(ctx, bundle, input_path, out_dir, k_spec):
    """Measure top-k hit rates for gold words at masked positions."""
    settings = _settings(ctx)
    bundle = settings.get("fillmask", "bundle", bundle)
    input_path = settings.get("fillmask", "input", input_path)
    out_dir = settings.get("fillmask", "out", out_dir)
    k_spec = settings.get("fillmask", "k", k_spec, "1,5,10")
    if not bundle or not input_path or not out_dir:
        raise ConfigInvalid("fillmask needs --bundle, --input, and --out")
    if isinstance(k_spec, str):
        try:
            k_values = [int(part) for part in k_spec.split(",") if part.strip()]
        except ValueError:
            raise ConfigInvalid(f"--k must be comma-separated integers, got {k_spec!r}")
    else:
        k_values = [int(part) for part in k_spec]
    if not k_values or min(k_values) < 1:
        raise ConfigInvalid("--k needs at least one positive cutoff")

    examples, file_failures = fileio.read_fillmask_dataset(input_path)
    if not examples and not file_failures:
        raise ConfigInvalid(f"input file {input_path} contains no records")
    records = [
        {"id": e.id, "text": e.text, "masked_word": e.masked_word} for e in examples
    ]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with _client(settings) as client:
        response = client.fillmask(bundle, records, k_values)

    metrics_path = out / "metrics.json"
    fileio.atomic_write_text(
        metrics_path,
        _json_text(
            {
                "hit_rates": [
                    {"k": int(k), "rate": rate}
                    for k, rate in sorted(
                        response["hit_rates"].items(), key=lambda kv: int(kv[0])
                    )
                ],
                "evaluated": response["evaluated"],
            }
        ),
    )
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["record_id", "rank"])
    for row in response["ranks"]:
        writer.writerow([row["id"], row["rank"]])
    ranks_path = out / "ranks.csv"
    fileio.atomic_write_text(ranks_path, buffer.getvalue())

    failures = _merge_failures(file_failures, response["skipped"])
    return _finish(
        out,
        "fillmask",
        {"dataset": str(input_path)},
        {"metrics": str(metrics_path), "ranks": str(ranks_path)},
        {"bundle": str(bundle), "k": sorted(set(k_values))},
        failures,
    )


# -- eval --------------------------------------------------------------------------------


@cli.command("eval")
@click.option(
    "--predictions",
    "prediction_specs",
    multiple=True,
    help="Predictions JSONL, optionally as name=path; repeat to compare runs.",
)
@click.option("--gold", "gold_path", default=None, help="Gold labels JSONL.")
@click.option(
    "--classes", default=None, help="Comma-separated class list fixing row order."
)
@click.option("--out", "out_dir", default=None)
@click.pass_context
def eval_cmd(ctx, prediction_specs, gold_path, classes, out_dir):
    """Score predictions against gold labels; write report, table, and CSV."""
    settings = _settings(ctx)
    specs = list(prediction_specs) or settings.get("eval", "predictions", None, [])
    if isinstance(specs, str):
        specs = [specs]
    gold_path = settings.get("eval", "gold", gold_path)
    classes = settings.get("eval", "classes", classes)
    out_dir = settings.get("eval", "out", out_dir)
    if not specs or not gold_path or not out_dir:
        raise ConfigInvalid("eval needs --predictions, --gold, and --out")
    if not Path(gold_path).is_file():
        raise ConfigInvalid(f"gold file not found: {gold_path}")
    if isinstance(classes, str):
        classes = [c.strip() for c in classes.split(",") if c.strip()]

    named: list[tuple[str, str]] = []
    for spec in specs:
        if "=" in spec:
            name, _, path = spec.partition("=")
        else:
            name, path = Path(spec).stem, spec
        if not Path(path).is_file():
            raise ConfigInvalid(f"predictions file not found: {path}")
        named.append((name, path))

    gold = fileio.read_gold(gold_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    reports: dict[str, dict] = {}
    tables: list[str] = []
    csv_parts: list[str] = []
    with _client(settings) as client:
        for position, (name, path) in enumerate(named):
            pairs = fileio.read_predictions(path)
            response = client.eval(pairs, gold, classes=classes, name=name)
            reports[name] = response["report"]
            tables.append(response["table"])
            csv_text = response["csv"]
            if position > 0:  # keep one header across stacked reports
                csv_text = "\n".join(csv_text.splitlines()[1:]) + "\n"
            csv_parts.append(csv_text)

    report_path = out / "report.json"
    payload = reports[named[0][0]] if len(named) == 1 else reports
    fileio.atomic_write_text(report_path, _json_text(payload))
    table_path = out / "table.txt"
    fileio.atomic_write_text(table_path, "\n\n".join(tables) + "\n")
    csv_path = out / "table.csv"
    fileio.atomic_write_text(csv_path, "".join(csv_parts))
    click.echo("\n\n".join(tables))

    inputs = {f"predictions:{name}": path for name, path in named}
    inputs["gold"] = str(gold_path)
    return _finish(
        out,
        "eval",
        inputs,
        {
            "report": str(report_path),
            "table": str(table_path),
            "csv": str(csv_path),
        },
        {"classes": classes, "reports": [name for name, _ in named]},
        [],
    )


# -- validate / serve ------------------------------------------------------------------


@cli.command()
@click.option("--bundle", default=None, help="Model bundle directory.")
@click.pass_context
def validate(ctx, bundle):
    """Check a bundle's layout, vocabulary, checksum, and forward pass."""
    settings = _settings(ctx)
    bundle = settings.get("validate", "bundle", bundle)
    if not bundle:
        raise ConfigInvalid("validate needs --bundle")
    with _client(settings) as client:
        report = client.validate_bundle(bundle)
    for check in report["checks"]:
        status = "ok" if check["ok"] else "FAIL"
        click.echo(f"[{status}] {check['name']}: {check['detail']}")
    if not report["ok"]:
        raise ConfigInvalid(f"bundle {bundle} failed validation")
    click.echo("bundle is valid")
    return 0


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Run the engine service as an HTTP server."""
    import uvicorn

    uvicorn.run("clozecast.service.app:app", host=host, port=port)
    return 0


def main(argv=None) -> int:
    """Entry point mapping errors onto stable exit codes."""
    try:
        result = cli.main(args=argv, standalone_mode=False, prog_name="clozecast")
    except click.exceptions.Exit as exc:  # --help and friends
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except EngineError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 1
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return int(result) if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
