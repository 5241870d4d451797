"""
Exception hierarchy; each error carries the CLI exit code it maps to
"""


class SSFError(Exception):
    exit_code = 1


class ConfigurationError(SSFError, ValueError):
    """Invalid model or training configuration, rejected at build time"""
    exit_code = 1


class InvalidArgumentError(SSFError, ValueError):
    """Operation called with arguments that violate its preconditions"""
    exit_code = 1


class UsageError(SSFError):
    exit_code = 1


class DataError(SSFError):
    """Unreadable, empty or inconsistent input data"""
    exit_code = 2


class TrainingError(SSFError):
    exit_code = 2

    def __init__(self, message, snapshot_path=None):
        super().__init__(message)
        self.snapshot_path = snapshot_path


class DecodeError(SSFError):
    exit_code = 3

    def __init__(self, message, frame_index=None):
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)
        self.frame_index = frame_index


class RangeCoderError(DecodeError):
    pass


class BitstreamError(DecodeError):
    pass


class ReconstructionMismatchError(DecodeError):
    """Decoder-side reconstruction differs from the encoder's"""
    pass
