"""Exception hierarchy shared by every module."""


class IrregdimError(Exception):
    pass


class ValidationError(IrregdimError, ValueError):
    """Bad input: malformed domains, out-of-range parameters, bad descriptors."""


class NumericError(IrregdimError, ArithmeticError):
    """A numerical routine failed (root finder, optimizer, bad derivative)."""


class EscapeError(IrregdimError):
    """An orbit left the union of branch domains."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class ConvergenceError(NumericError):
    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class InfeasibleError(IrregdimError):
    pass


class HarvestError(IrregdimError):
    def __init__(self, message, achieved_mass=None, stage=None):
        super().__init__(message)
        self.achieved_mass = achieved_mass
        self.stage = stage


class BudgetError(IrregdimError):
    pass


class EstimationError(IrregdimError):
    pass
