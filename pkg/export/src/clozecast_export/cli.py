"""Command-line front end for checkpoint export."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import ExportError


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """Export masked-LM checkpoints into self-contained engine bundles."""


@cli.command(name="export")
@click.option("--model", "model_id", required=True,
              help="Checkpoint to export: a local path or model identifier.")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path),
              help="Bundle directory to create (model.onnx, vocab.txt, meta.json).")
@click.option("--max-len", default=512, show_default=True,
              type=click.IntRange(min=1),
              help="Sequence-length cap; clamped to the model's position limit.")
def export_command(model_id: str, out_dir: Path, max_len: int):
    """Write model.onnx, vocab.txt, and meta.json for one checkpoint."""
    from .bundle import export

    manifest = export(model_id, out_dir, max_len=max_len)
    click.echo(f"bundle written to {out_dir}")
    click.echo(f"  source: {manifest.source}")
    click.echo(
        f"  vocabulary: {manifest.vocab_size} tokens "
        f"(mask={manifest.mask_id}, pad={manifest.pad_id}, unk={manifest.unk_id})"
    )
    click.echo(f"  max_len: {manifest.max_len}")
    click.echo(f"  graph sha256: {manifest.graph_sha256}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except ExportError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 1
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


def entrypoint():
    sys.exit(main())
