"""
Structured Errors
Exception hierarchy shared by every module; each class carries an exit code for the CLI
"""

from typing import Any, Dict


class AsdError(Exception):
    """Base class for all toolkit errors"""

    exit_code: int = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        """Serializable view used for logging"""
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": {k: str(v) for k, v in self.details.items()},
        }

    def __str__(self) -> str:
        if not self.details:
            return self.message
        rendered = ", ".join(f"{k}={v}" for k, v in self.details.items())
        return f"{self.message} ({rendered})"


# Usage errors (exit 1)

class UsageError(AsdError):
    """Invalid command-line usage or arguments"""
    exit_code = 1


class ConfigError(UsageError):
    """Invalid configuration key or value"""

    def __init__(self, message: str, key: str = "", **details: Any):
        super().__init__(message, key=key, **details)
        self.key = key


# Data errors (exit 2)

class DataError(AsdError):
    """Input data could not be used"""
    exit_code = 2


class WavFormatError(DataError):
    """WAV file does not satisfy the decoder contract"""


class ChannelCountError(WavFormatError):
    """WAV file is not mono"""


class SampleRateError(WavFormatError):
    """WAV sample rate differs from the configured rate"""


class EncodingError(WavFormatError):
    """WAV payload is not 16-bit PCM"""


class MalformedHeaderError(WavFormatError):
    """WAV header could not be parsed"""


class DatasetError(DataError):
    """Dataset layout is unusable"""


class LabelError(DataError):
    """Label is not part of the vocabulary"""


class MetricError(DataError):
    """Metric inputs are degenerate (e.g. a single class)"""


class ContainerError(DataError):
    """Feature container file is corrupt"""


class CheckpointError(DataError):
    """Checkpoint file could not be read"""


class CorruptHeaderError(CheckpointError):
    """Checkpoint magic, metadata or checksum is invalid"""


class VersionMismatchError(CheckpointError):
    """Checkpoint was written by an unsupported format version"""


class TruncatedPayloadError(CheckpointError):
    """Checkpoint ends before all declared tensors"""


# Numeric errors (exit 3)

class NumericError(AsdError):
    """Numerical failure in the tensor engine or training"""
    exit_code = 3


class ShapeError(NumericError):
    """Operand shapes are incompatible"""


class GradientError(NumericError):
    """Backward pass cannot be performed"""


class NonFiniteLossError(NumericError):
    """Loss or gradient became NaN/Inf during training"""


class GradCheckError(NumericError):
    """Finite-difference gradient check failed"""
