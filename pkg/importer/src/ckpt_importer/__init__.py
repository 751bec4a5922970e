"""Checkpoint and tokenizer importer for the slicekit engine."""

from .convert import NameMapEntry, convert_checkpoint
from .corpus import export_tokenized_corpus
from .errors import (
    ImporterError,
    SelfTestError,
    ShapeMismatchError,
    TokenizationError,
    UnmappedTensorError,
    UnsupportedArchitectureError,
)

__version__ = "0.1.0"

__all__ = [
    "NameMapEntry",
    "convert_checkpoint",
    "export_tokenized_corpus",
    "ImporterError",
    "SelfTestError",
    "ShapeMismatchError",
    "TokenizationError",
    "UnmappedTensorError",
    "UnsupportedArchitectureError",
]
