"""Exception hierarchy shared by every nslab module."""


class LabError(Exception):
    """Base class for nslab failures."""


class InvalidInputError(LabError, ValueError):
    """A precondition of an operation was violated."""


class ManifestError(InvalidInputError):
    """The run manifest is malformed or names an invariant it breaks."""


class NumericalError(LabError, ArithmeticError):
    """A computation produced non-finite values or blew past a ceiling."""


def require(condition: bool, message: str) -> None:
    if not condition:
        raise InvalidInputError(message)
