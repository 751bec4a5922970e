"""Importer exception hierarchy."""


class ImporterError(Exception):
    """Base class for conversion and tokenisation failures."""


class UnsupportedArchitectureError(ImporterError):
    """Source model family or feature the engine cannot represent."""


class UnmappedTensorError(ImporterError):
    """Source tensors with no mapping to a target tensor."""


class ShapeMismatchError(ImporterError):
    """Mapped tensors whose (possibly transposed) shapes disagree with the config."""


class SelfTestError(ImporterError):
    """Converted-model logits diverge from the source framework beyond tolerance."""


class TokenizationError(ImporterError):
    """Corpus text could not be decoded or encoded."""
