class NavigationError(Exception):
    """Base class for every error raised by the navigation package."""

    exit_code = 1


class InputError(NavigationError, ValueError):
    """An argument violates a documented precondition."""


class NumericalError(NavigationError, ArithmeticError):
    """A numerical kernel failed (root not bracketed, non-finite velocity, ...)."""

    exit_code = 2


class PrimitiveTypeError(NavigationError, TypeError):
    """An operation received an obstacle primitive it does not support."""


class SceneValidationError(NavigationError):
    """A scene failed validation; the failing report is attached."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class InfiniteDepthError(InputError):
    """Zero stereo disparity: the matched point lies at infinite depth."""


class UsageError(NavigationError):
    """Bad command-line usage or an unknown scene / subcommand."""


class SafetyFailure(NavigationError):
    """A run or probe finished but failed its safety/convergence assertion."""

    exit_code = 2
