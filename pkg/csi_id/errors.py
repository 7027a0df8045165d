from typing import Optional


class CsiIdError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class InputError(CsiIdError):
    """Bad input: unparsable files, unknown names, violated preconditions."""

    exit_code = 1


class ParseError(InputError):
    """A text file could not be parsed. Carries the offending line number."""

    def __init__(self, message: str, line_number: Optional[int] = None, source: Optional[str] = None):
        self.line_number = line_number
        self.source = source
        location = ""
        if source:
            location = f"{source}:"
        if line_number is not None:
            location = f"{location}{line_number}: "
        elif location:
            location = f"{location} "
        super().__init__(f"{location}{message}")


class ValidationError(InputError):
    pass


class PreconditionError(InputError):
    pass


class UnknownVariableError(InputError, KeyError):
    def __init__(self, name: str, where: str = "graph"):
        self.name = name
        super().__init__(f"unknown variable '{name}' in {where}")

    def __str__(self) -> str:
        return self.args[0]


class ConfigError(InputError):
    pass


class SchemaError(InputError):
    pass


class SizingError(InputError):
    pass


class EvaluationError(CsiIdError):
    """An estimand could not be evaluated against a distribution."""

    exit_code = 3


class PositivityError(EvaluationError):
    """A conditioning event has zero probability mass."""

    def __init__(self, term: str):
        self.term = term
        super().__init__(f"zero-mass conditioning event in term {term}")


class InternalConsistencyError(CsiIdError):
    """Two checks that must agree did not. Indicates a bug, not bad input."""

    exit_code = 1
