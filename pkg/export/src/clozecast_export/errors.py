"""Exception hierarchy for checkpoint export."""


class ExportError(Exception):
    """Base class: the checkpoint cannot be turned into a valid bundle."""


class NoMLMHead(ExportError):
    """The checkpoint does not provide a trained masked-language-model head."""


class TokenizerIncompatible(ExportError):
    """The tokenizer's vocabulary cannot be expressed as one token per line."""


class UnsupportedArchitecture(ExportError):
    """The model family or configuration is outside what the emitter covers."""
