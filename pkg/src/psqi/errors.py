"""Exception hierarchy shared by all modules."""


class PsqiError(Exception):
    """Base class for every error raised by this package."""


class InvalidSignalError(PsqiError, ValueError):
    pass


class InvalidCutoffError(PsqiError, ValueError):
    pass


class InvalidOrderError(PsqiError, ValueError):
    pass


class SignalTooShortError(PsqiError, ValueError):
    pass


class UndefinedSnrError(PsqiError, ZeroDivisionError):
    pass


class InvalidLengthError(PsqiError, ValueError):
    pass


class DegenerateSignalError(PsqiError, ValueError):
    """The baseline-filtered signal has no energy, so perturbation scaling is undefined."""


class DegenerateNoiseError(PsqiError, ValueError):
    pass


class UnsupportedSignalError(PsqiError, ValueError):
    pass


class ClassifierFailure(PsqiError, RuntimeError):
    def __init__(self, message, returncode=None, stdout="", stderr=""):
        super().__init__(message)
        self.returncode = returncode
        self.stdout = stdout
        self.stderr = stderr


class RangeError(PsqiError, ValueError):
    pass


class UndefinedCorrelationError(PsqiError, ValueError):
    pass


class UndefinedMarginError(PsqiError, ValueError):
    pass


class InfeasibleMarginError(UndefinedMarginError):
    pass


class DataError(PsqiError, ValueError):
    """Malformed or inconsistent input files."""


class AnnotationMissingError(DataError):
    pass


class ConfigError(PsqiError, ValueError):
    pass


class FileError(PsqiError, OSError):
    pass
