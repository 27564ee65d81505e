"""Exception types shared across the engine.

Every engine-raised error derives from EngineError so callers (service,
CLI) can distinguish engine failures from programming bugs.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class BundleInvalid(EngineError):
    """Model bundle directory is missing files or internally inconsistent."""


class PositionNotMasked(EngineError):
    """Queried position does not hold the mask token."""


class SequenceTooLong(EngineError):
    """Token sequence exceeds the backend's max_len."""


class BatchItemError(EngineError):
    """Wraps a per-item failure inside a batch call, keeping the index."""

    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"item {index}: {cause}")


class EmptyInput(EngineError):
    """Text is empty after whitespace normalization."""


class TemplateMalformed(EngineError):
    """Template pattern violates the one-mask / text-placeholder contract."""


class MissingEntity(EngineError):
    """Entity-typing template rendered without an entity."""


class EmptyClassAfterResolution(EngineError):
    """A verbalizer class has no usable label words left."""


class WordNotFound(EngineError):
    """Ablation asked to remove a surface that is not in the class."""


class DimensionMismatch(EngineError):
    """Verbalizer token ids exceed the distribution's vocabulary size."""


class ModeMismatch(EngineError):
    """Calibration state lacks the vectors its mode requires, or was
    applied to the wrong kind of scores."""


class EmptyBatch(EngineError):
    """Batch calibration got an empty fitting batch."""


class NoOccurrencesForClass(EngineError):
    """No seed occurrences found in a class's texts (warning-level)."""


class MissingGold(EngineError):
    """A prediction id has no gold label."""


class MultiPieceGold(EngineError):
    """Fill-mask gold word is not a single vocabulary piece."""


class AllSentencesFailed(EngineError):
    """Every sentence in a PLL corpus failed to score."""


class ConfigInvalid(EngineError):
    """Run configuration is structurally invalid."""


class SchemaMismatch(EngineError):
    """Dataset record does not match the schema the task requires."""


class UnsupportedGraph(BundleInvalid):
    """ONNX graph uses operators outside the supported subset."""
