"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for invalid input, 3 for domain violations, 4 for numerical failures.
"""

__all__ = [
    "AggrekinError",
    "ValidationError",
    "NonPositiveRate",
    "OligomerTooSmall",
    "DomainError",
    "ZeroDenominator",
    "InadmissibleState",
    "NoPositiveEquilibrium",
    "ZeroQ",
    "ZeroMass",
    "OutsideTriangle",
    "SingularDenominator",
    "NoSignChange",
    "NoRoot",
    "ConditionViolated",
    "NonPositiveComponent",
    "ClockNotPositive",
    "NumericalError",
    "StepLimit",
    "NonFiniteState",
    "StepSizeTooSmall",
    "Inconclusive",
]


class AggrekinError(Exception):
    exit_code = 1


class ValidationError(AggrekinError, ValueError):
    exit_code = 2


class NonPositiveRate(ValidationError):
    pass


class OligomerTooSmall(ValidationError):
    pass


class DomainError(AggrekinError, ValueError):
    exit_code = 3


class ZeroDenominator(DomainError):
    pass


class InadmissibleState(DomainError):
    pass


class NoPositiveEquilibrium(DomainError):
    pass


class ZeroQ(DomainError):
    pass


class ZeroMass(DomainError):
    pass


class OutsideTriangle(DomainError):
    pass


class SingularDenominator(DomainError):
    pass


class NoSignChange(DomainError):
    pass


class NoRoot(DomainError):
    pass


class ConditionViolated(DomainError):
    pass


class NonPositiveComponent(DomainError):
    pass


class ClockNotPositive(DomainError):
    pass


class NumericalError(AggrekinError, RuntimeError):
    exit_code = 4

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class StepLimit(NumericalError):
    pass


class NonFiniteState(NumericalError):
    pass


class StepSizeTooSmall(NumericalError):
    pass


class Inconclusive(NumericalError):
    """No convergence or growth criterion was met within the horizon."""
