"""
Exception hierarchy for the DSFAD pipeline.
"""


class DSFADError(Exception):
    """Base class for all pipeline errors."""


class ConfigurationError(DSFADError, ValueError):
    """Invalid configuration value, dataset spec or unknown option."""


class SamplingError(DSFADError):
    """A batch cannot be drawn from the dataset."""


class RenderingError(DSFADError, KeyError):
    """A caption template references an attribute the identity does not carry."""

    def __str__(self):
        return Exception.__str__(self)


class TokenizationError(DSFADError, ValueError):
    """Text contains a word outside the closed caption vocabulary."""


class CaptionSourceError(DSFADError):
    """A caption backend failed or returned an unusable description."""


class ShapeError(DSFADError, ValueError):
    """Tensor dimensions do not match what an operation expects."""


class DegenerateEmbeddingError(DSFADError, ValueError):
    """An embedding has zero norm where a direction is required."""


class BatchStructureError(DSFADError, ValueError):
    """A batch violates the P x K cross-modality structure."""


class TrainingDivergenceError(DSFADError):
    """A loss term became NaN or infinite."""

    def __init__(self, term, value):
        self.term = term
        self.value = value
        super().__init__(f"Loss term {term} is not finite ({value})")


class CheckpointError(DSFADError):
    """A checkpoint cannot be read or does not match the model."""

    def __init__(self, message, diff=None):
        self.diff = diff or []
        if self.diff:
            message = message + '\n' + '\n'.join(f"  {line}" for line in self.diff)
        super().__init__(message)


class ProtocolError(DSFADError):
    """An evaluation protocol is infeasible for the given split."""


class MissingArtifactError(DSFADError):
    """An upstream stage output is missing."""
