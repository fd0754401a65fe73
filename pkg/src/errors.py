"""
Errors - Exception hierarchy
Every failure the engine can report, grouped by the CLI exit code it maps to
"""

from typing import Optional


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_COMPAT = 4


class OHSLError(Exception):
    """Base class for all engine errors"""

    exit_code = EXIT_FAILURE


class DataError(OHSLError, ValueError):
    """Input data is malformed, inconsistent or degenerate"""

    exit_code = EXIT_DATA


class DimensionError(DataError):
    """Vector or matrix shapes do not agree"""


class NonFiniteError(DataError):
    """Input contains NaN or infinity"""


class DegenerateSampleError(DataError):
    """Initial sample cannot support the requested number of bits"""


class DegenerateInputError(DataError):
    """A point that cannot drive an update (zero vector with positive loss)"""


class EmptyLabelSetError(DataError):
    """A labeled point carries no labels"""


class UnknownClassError(DataError, KeyError):
    """A class id has no target code in the codebook"""

    def __str__(self) -> str:
        return Exception.__str__(self)


class CodebookExhaustedError(DataError):
    """No unused Hadamard column is left for a new class"""


class FormatError(DataError):
    """A file could not be parsed"""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        offset: Optional[int] = None
    ):
        self.path = path
        self.line = line
        self.offset = offset

        context = []
        if path:
            context.append(str(path))
        if line is not None:
            context.append(f"line {line}")
        if offset is not None:
            context.append(f"byte {offset}")

        if context:
            message = f"{', '.join(context)}: {message}"
        super().__init__(message)


class CompatibilityError(OHSLError):
    """Two artifacts (model, database, index) cannot be used together"""

    exit_code = EXIT_COMPAT


class StaleIndexError(CompatibilityError):
    """The database grew after the multi-index was built"""


class ConcurrentWriterError(OHSLError, RuntimeError):
    """A second thread tried to update the similarity model"""
