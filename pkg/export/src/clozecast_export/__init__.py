"""Export Hugging Face masked-LM checkpoints into engine bundles."""

from .errors import (
    ExportError,
    NoMLMHead,
    TokenizerIncompatible,
    UnsupportedArchitecture,
)

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportManifest",
    "NoMLMHead",
    "TokenizerIncompatible",
    "UnsupportedArchitecture",
    "export",
]


def __getattr__(name):
    # torch/transformers load lazily so `--help` and error imports stay light
    if name in ("export", "ExportManifest"):
        from . import bundle

        return getattr(bundle, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
