"""Exception hierarchy.

``DataError`` covers malformed inputs (CLI exit status 2) and
``NumericalError`` covers failures inside the estimation routines
(CLI exit status 3).
"""


class MrhlpError(Exception):
    """Base class for every error raised by this package."""


class DataError(MrhlpError, ValueError):
    pass


class NumericalError(MrhlpError, ArithmeticError):
    pass


class EmptySeries(DataError):
    def __init__(self, msg="series has no observations"):
        super().__init__(msg)


class NonIncreasingTime(DataError):
    def __init__(self, index, line=None):
        self.index = index
        self.line = line
        where = f"line {line}" if line is not None else f"index {index}"
        super().__init__(f"time stamps not strictly increasing at {where}")


class NonFiniteValue(DataError):
    def __init__(self, row, col):
        self.row = row
        self.col = col
        super().__init__(f"non-finite value at ({row}, {col})")


class DimensionMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class ParseError(DataError):
    def __init__(self, line, column, detail=""):
        self.line = line
        self.column = column
        msg = f"cannot parse line {line}, column {column}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class RaggedRow(DataError):
    def __init__(self, line, expected, found):
        self.line = line
        super().__init__(f"line {line} has {found} fields, header has {expected}")


class NonPdCovariance(NumericalError):
    pass


class SingularHessian(NumericalError):
    pass


class RankDeficientDesign(NumericalError):
    pass


class AllRestartsFailed(NumericalError):
    def __init__(self, errors):
        self.errors = list(errors)
        detail = "; ".join(f"restart {i}: {e}" for i, e in self.errors)
        super().__init__(f"every EM restart failed ({detail})")
