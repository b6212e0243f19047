from typing import Optional


class IntentMotionError(Exception):
    exit_code = 1

    def __init__(self, message: str, error_code: Optional[str] = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


class DegenerateInputError(IntentMotionError):
    def __init__(self, message: str, norm: Optional[float] = None):
        self.norm = norm
        super().__init__(message, error_code="degenerate_input")


class InvalidRotationError(IntentMotionError):
    def __init__(self, message: str, deviation: Optional[float] = None):
        self.deviation = deviation
        super().__init__(message, error_code="invalid_rotation")


class DimensionMismatchError(IntentMotionError):
    def __init__(self, message: str, expected: Optional[tuple] = None, actual: Optional[tuple] = None):
        self.expected = expected
        self.actual = actual
        super().__init__(message, error_code="dimension_mismatch")


class NoContactError(IntentMotionError):
    def __init__(self, message: str, hand: Optional[str] = None, min_distance: Optional[float] = None):
        self.hand = hand
        self.min_distance = min_distance
        super().__init__(message, error_code="no_contact")


class NonConvergenceError(IntentMotionError):
    exit_code = 4

    def __init__(self, message: str, frames: Optional[list] = None):
        self.frames = frames or []
        super().__init__(message, error_code="non_convergence")


class NoSwitchFoundError(IntentMotionError):
    def __init__(self, message: str, min_gap: Optional[float] = None):
        self.min_gap = min_gap
        super().__init__(message, error_code="no_switch_found")


class DivergedLossError(IntentMotionError):
    def __init__(self, message: str, epoch: Optional[int] = None, checkpoint: Optional[str] = None):
        self.epoch = epoch
        self.checkpoint = checkpoint
        super().__init__(message, error_code="diverged_loss")


class TooShortError(IntentMotionError):
    def __init__(self, message: str, length: Optional[int] = None, required: Optional[int] = None):
        self.length = length
        self.required = required
        super().__init__(message, error_code="too_short")


class UnknownSubjectError(IntentMotionError):
    def __init__(self, message: str, subject_id: Optional[str] = None):
        self.subject_id = subject_id
        super().__init__(message, error_code="unknown_subject")


class SingularCovarianceError(IntentMotionError):
    def __init__(self, message: str, min_eigenvalue: Optional[float] = None):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(message, error_code="singular_covariance")


class InsufficientSamplesError(IntentMotionError):
    def __init__(self, message: str, available: Optional[int] = None, requested: Optional[int] = None):
        self.available = available
        self.requested = requested
        super().__init__(message, error_code="insufficient_samples")


class SchemaViolationError(IntentMotionError):
    exit_code = 3

    def __init__(self, message: str, pointer: str = "", path: Optional[str] = None):
        self.pointer = pointer
        self.path = path
        super().__init__(message, error_code="schema_violation")


class ArtifactIOError(IntentMotionError):
    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(message, error_code="artifact_io")
