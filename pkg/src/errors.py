"""
Exception hierarchy shared by every module, plus the CLI exit-code mapping
"""
from typing import Optional


class TransformapError(Exception):
    """Base class for all toolkit errors"""

    exit_code = 4


class ConfigurationError(TransformapError, ValueError):
    """Invalid or inconsistent configuration (unknown key, bad geometry, missing checkpoint)"""

    exit_code = 2


class InputError(TransformapError, ValueError):
    """Malformed or out-of-range input data"""

    exit_code = 3


class TraceParseError(InputError):
    """A trace line could not be parsed"""

    def __init__(self, message: str, line_number: Optional[int] = None, path: Optional[str] = None):
        self.line_number = line_number
        self.path = path
        location = ""
        if path:
            location += f"{path}:"
        if line_number is not None:
            location += f"line {line_number}: "
        elif path:
            location += " "
        super().__init__(f"{location}{message}")


class AddressRangeError(InputError):
    """An address or index does not fit in its configured bit width"""


class DatasetError(InputError):
    """A dataset cannot be built or read"""


class SchemaError(InputError):
    """A CSV/JSON file does not have the expected columns"""


class ShapeError(TransformapError, ValueError):
    """Tensor shapes do not agree"""


class ContractError(TransformapError, ValueError):
    """A documented precondition was violated by the caller"""


class TrainingDivergedError(TransformapError, RuntimeError):
    """Loss became NaN/Inf during training"""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"Training diverged at step {step}: loss={loss}")


def exit_code_for(error: BaseException) -> int:
    """
    Map an exception to a process exit code

    0 success, 2 configuration, 3 input (including missing files), 4 runtime.
    """
    if isinstance(error, TransformapError):
        return error.exit_code
    if isinstance(error, (FileNotFoundError, IsADirectoryError, PermissionError)):
        return InputError.exit_code
    return TransformapError.exit_code
