"""Exception types shared across the pipeline."""


class PhenoError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(PhenoError):
    """A sheet or store violates its schema; message names row and column."""


class ModelError(PhenoError):
    """A model file or model usage is invalid."""


class SegmentationError(PhenoError):
    """Segmentation failed in a way that signals bad upstream data."""


class StageError(PhenoError):
    """A pipeline stage failed; message names the stage."""
