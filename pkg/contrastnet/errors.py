"""Exception hierarchy shared by every contrastnet module.

DataError and its subclasses map to CLI exit code 2, NumericalError to 3.
"""

from typing import Mapping, Optional


class ContrastNetError(Exception):
    """Base class for all contrastnet failures"""


class DataError(ContrastNetError, ValueError):
    """Input data, files or configuration are invalid"""


class CorpusError(DataError):
    """Corpus or splits file failed validation"""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SamplingError(DataError):
    """A split cannot supply the requested episode shape"""


class AugmentationError(DataError):
    """Augmentation file or parameters are invalid"""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(DataError):
    """Training configuration is invalid"""


class CheckpointError(DataError):
    """Checkpoint file is unreadable or malformed"""


class NumericalError(ContrastNetError, ArithmeticError):
    """A loss value or gradient became non-finite"""

    def __init__(self, message: str, diagnostics: Optional[Mapping] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"


class EncodingError(DataError):
    """Token sequence or parameter table cannot be encoded"""
