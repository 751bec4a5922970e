"""Exception hierarchy shared by all slicekit modules."""


class SliceKitError(Exception):
    """Base class for all slicekit errors."""


class DimensionError(SliceKitError):
    """A dimension argument is out of range (e.g. zero-sized matrix)."""


class ShapeError(SliceKitError):
    """Operands have incompatible shapes."""


class ConvergenceError(SliceKitError):
    """Iterative solver failed to converge within its budget."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class DegenerateInputError(SliceKitError):
    """Numerically degenerate input (zero-norm rows, rank-0 covariance, non-finite values)."""


class StateError(SliceKitError):
    """The model is in the wrong state for the requested transformation."""


class VocabularyError(SliceKitError):
    """A token id falls outside the model vocabulary."""


class InvalidRotationError(SliceKitError):
    """A supplied rotation matrix is not orthogonal."""


class CalibrationError(SliceKitError):
    """The calibration input set is empty or unusable."""


class InvalidSpecError(SliceKitError):
    """A slicing specification is inconsistent with the model dimensions."""


class CheckpointError(SliceKitError):
    """Base class for checkpoint parse errors."""


class MalformedHeaderError(CheckpointError):
    """The checkpoint header is not valid (bad length, bad JSON, bad offsets)."""


class TruncatedPayloadError(CheckpointError):
    """A tensor's declared byte range extends beyond the file payload."""


class UnknownTensorError(CheckpointError):
    """The checkpoint declares a tensor name the schema does not recognise."""


class MissingTensorError(CheckpointError):
    """A tensor required by the model config is absent from the checkpoint."""


class DtypeMismatchError(CheckpointError):
    """A tensor's dtype disagrees with the declared model precision."""
