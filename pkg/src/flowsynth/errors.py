"""Exception hierarchy shared by all flowsynth modules."""


class FlowSynthError(Exception):
    """Base class for all errors raised by flowsynth."""


class InvalidDimensionError(FlowSynthError):
    """Raster dimensions are empty, mismatched, or otherwise unusable."""


class InvalidParameterError(FlowSynthError):
    """A parameter is outside its documented domain."""


class DegenerateGeometryError(FlowSynthError):
    """A spline system is singular even after regularization."""


class DegenerateLayerError(FlowSynthError):
    """An occluder layer is empty (or could not be drawn non-empty)."""


class FlowFormatError(FlowSynthError):
    """A flow file is truncated, has a bad magic number, or a bad layout."""


class FlowEncodeError(FlowSynthError):
    """Flow values are outside the representable range of a file format."""


class EmptyCorpusError(FlowSynthError):
    """No usable images were found during ingestion."""


class EmptyEvaluationError(FlowSynthError):
    """A metric was requested over zero valid pixels."""
