"""Exception hierarchy shared by every stage of the pipeline.

Each class carries the CLI exit code it maps to.
"""


class EstPredError(Exception):
    exit_code = 1


class InputError(EstPredError):
    """Bad or missing input: unreadable file, unknown option value."""

    exit_code = 2


class ParseError(InputError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class DataError(InputError):
    """Input parses but violates a data invariant."""


class ConfigurationError(InputError):
    pass


class EmptyInputError(InputError):
    pass


class CalibrationError(DataError):
    pass


class ContractError(EstPredError):
    """A caller broke an operation contract (shape, pairing, coverage)."""

    exit_code = 3


class CoverageError(ContractError):
    def __init__(self, message, missing=()):
        self.missing = list(missing)
        super().__init__(message)


class FormatError(ContractError):
    pass


class NumericalError(EstPredError):
    exit_code = 4

    def __init__(self, message, frame=None):
        self.frame = frame
        super().__init__(message if frame is None else f"frame {frame}: {message}")
