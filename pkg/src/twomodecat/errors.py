"""Exception hierarchy shared by all modules."""


class TwoModeCatError(Exception):
    pass


class InvalidArgumentError(TwoModeCatError, ValueError):
    pass


class TruncationError(TwoModeCatError):
    """Fock cutoff too small for the requested state."""


class NumericError(TwoModeCatError, ArithmeticError):
    pass


class StabilityError(TwoModeCatError):
    """Integrator step too coarse for the generator."""


class ParseError(TwoModeCatError, ValueError):
    pass


class ValidationError(TwoModeCatError, ValueError):
    pass
