"""ulamkit: best Ulam constants and shadowing for 2-D nonautonomous linear systems."""

__version__ = "0.1.0"
