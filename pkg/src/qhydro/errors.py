"""Exception hierarchy shared by the package."""


class QHydroError(Exception):
    """Base class for all package errors."""


class ValidationError(QHydroError, ValueError):
    """Bad input: malformed parameters, inconsistent grids, invalid scenarios."""


class NumericalError(QHydroError, ArithmeticError):
    """A computation produced non-finite values or could not converge."""


class NullStateError(ValidationError):
    def __init__(self, msg="null state"):
        super().__init__(msg)


class DomainTooSmallError(ValidationError):
    def __init__(self, msg="domain too small"):
        super().__init__(msg)


class EvolutionDiverged(NumericalError):
    def __init__(self, msg="evolution diverged"):
        super().__init__(msg)


class PhaseNotSingleValued(NumericalError):
    def __init__(self, msg="phase not single-valued"):
        super().__init__(msg)
