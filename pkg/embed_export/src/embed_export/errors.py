class ExportError(Exception):
    """Base class for exporter failures."""


class CorpusError(ExportError):
    """The corpus file is malformed."""


class AlignmentError(ExportError):
    """A core token could not be mapped to any subword."""
