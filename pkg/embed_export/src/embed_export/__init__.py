"""Run a pretrained transformer over a tokenized corpus and write the
per-sample embedding matrices in the core toolkit's binary format."""

from .errors import AlignmentError, CorpusError
from .export import ExportSpec, export

__all__ = ["AlignmentError", "CorpusError", "ExportSpec", "export"]
