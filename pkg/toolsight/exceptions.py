"""Exception hierarchy shared by every toolsight package.

The CLI maps these onto exit codes: data problems exit with 3, everything
else raised from here exits with 4.
"""

from typing import Optional


class ToolsightError(Exception):
    """Base class for all toolsight errors."""

    def __init__(self, message: str, detail: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.detail = detail


class ShapeError(ToolsightError, ValueError):
    """Tensor shapes or counts do not agree."""


class UsageError(ToolsightError):
    """An API was called in a way its contract forbids."""


class NumericalError(ToolsightError):
    """A forward op produced NaN or Inf from finite inputs."""


class DataValidationError(ToolsightError):
    """A dataset file or record failed validation."""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        field: Optional[str] = None,
        detail: Optional[str] = None,
    ):
        context = ", ".join(
            part for part in (path and f"file {path}", field and f"field {field}") if part
        )
        super().__init__(f"{message} ({context})" if context else message, detail)
        self.path = path
        self.field = field


class FormatError(DataValidationError):
    """A binary or image file has a bad header or a truncated payload."""


class TaxonomyMismatchError(DataValidationError):
    """Predictions, annotations or checkpoints disagree on the class taxonomy."""


class ProviderError(DataValidationError):
    """A flow or depth map the provider was asked for is not available."""


class SceneConfigError(DataValidationError):
    """A synthetic scene configuration cannot be rendered."""


class CheckpointError(ToolsightError):
    """A checkpoint file is malformed or incompatible."""


class TrainingDivergedError(ToolsightError):
    """A loss term became non-finite during training."""

    def __init__(self, epoch: int, batch: int, term: str, value: float):
        super().__init__(
            f"Loss term {term} became {value} at epoch {epoch}, batch {batch}",
            detail="Lower the learning rate or check the inputs of this batch.",
        )
        self.epoch = epoch
        self.batch = batch
        self.term = term
        self.value = value
