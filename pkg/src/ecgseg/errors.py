"""Exception hierarchy.

``DataError`` covers problems with input data (malformed files, untrainable
label sets); ``ConfigError`` covers invalid user configuration. The CLI maps
the two onto distinct exit codes.
"""


class EcgsegError(Exception):
    """Base class for all package errors."""


class ConfigError(EcgsegError):
    pass


class DataError(EcgsegError):
    pass


class FormatError(DataError):
    """Malformed file contents."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedFormatError(FormatError):
    def __init__(self, code, line=None):
        super().__init__(f"unsupported WFDB storage format {code}", line)
        self.code = code


class TruncationError(FormatError):
    def __init__(self, message, expected=None, actual=None):
        if expected is not None:
            message = f"{message} (expected {expected} bytes, got {actual})"
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class StructureError(DataError):
    """Annotation or label structure violates wave ordering rules."""

    def __init__(self, message, time=None):
        if time is not None:
            message = f"{message} at sample {time}"
        super().__init__(message)
        self.time = time


class EstimationError(DataError):
    """Emission parameters cannot be estimated for a complex."""

    def __init__(self, message, complex_name=None):
        super().__init__(message)
        self.complex_name = complex_name


class DecodeError(DataError):
    pass


class InsufficientPeaksError(DataError):
    pass
