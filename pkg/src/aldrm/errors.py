"""Exception hierarchy shared by the library and the command line."""


class AldrmError(Exception):
    """Base class for all package errors."""


class DomainError(AldrmError, ValueError):
    """A distribution parameter or probability lies outside its support."""


class SpecError(AldrmError, ValueError):
    """Malformed model specification or scenario file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(AldrmError, ValueError):
    """Dataset is empty, malformed, or inconsistent with a specification."""


class SamplerError(AldrmError, RuntimeError):
    """The MCMC sampler reached an invalid state."""
