"""Exception hierarchy shared by all modules.

CLI exit codes hang off these classes (see :mod:`diracgap.cli`).
"""


class DiracGapError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InvalidChannel(DiracGapError, ValueError):
    pass


class DomainError(DiracGapError, ValueError):
    pass


class InvalidPotential(DiracGapError, ValueError):
    pass


class QuadratureFailure(DiracGapError, ArithmeticError):
    exit_code = 3


class SingularGram(DiracGapError, ArithmeticError):
    exit_code = 3


class DenominatorSignError(DiracGapError, ValueError):
    pass


class OutOfCoreBranch(DiracGapError, ValueError):
    """(dim, nu) lies in the branch where the core needs no extra functions."""


class NoEigenvalueInGap(DiracGapError):
    exit_code = 2


class ConvergenceFailure(DiracGapError, ArithmeticError):
    exit_code = 3


class NegativeBlockNotDefinite(ConvergenceFailure):
    """The negative free-subspace block lost definiteness; mesh too coarse."""


class PropertyViolation(DiracGapError, AssertionError):
    exit_code = 4
