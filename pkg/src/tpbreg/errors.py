"""Exception hierarchy shared across the package.

Usage errors (bad arguments, shape mismatches) raise plain ValueError;
the classes here mark failures of the numerical machinery itself so the
command-line layer can map them to distinct exit codes.
"""


class NumericalError(RuntimeError):
    """A numerical routine failed beyond recovery (factorization, quadrature)."""


class CalibrationError(NumericalError):
    """Root finding for the global shrinkage parameter could not bracket."""
