"""Exception hierarchy shared by every zipmix module."""


class ZipmixError(Exception):
    """Base class for all errors raised by zipmix."""


class DomainError(ZipmixError, ValueError):
    """A parameter lies outside its admissible range."""

    def __init__(self, param, message=None):
        self.param = param
        super().__init__(message or f"parameter {param!r} out of range")


class DimensionMismatch(ZipmixError, ValueError):
    pass


class SupportViolation(ZipmixError, ValueError):
    """A (y, z, n) triple falls outside the support: some n_ij > 0 with z_ij = 0."""


class DegenerateSplit(ZipmixError, ValueError):
    """The site split has r in {0, 1}."""


class ZeroDenominator(ZipmixError, ZeroDivisionError):
    pass


class EmptyCell(ZipmixError, ValueError):
    pass


class EmptyComponent(ZipmixError, ValueError):
    """An M-step denominator vanished: one mixture component received no weight."""


class DegenerateData(ZipmixError, ValueError):
    pass


class AllZeros(ZipmixError, ValueError):
    pass


class BoundaryParams(ZipmixError, ValueError):
    """Information matrix requested at a parameter on the boundary."""


class BoundaryFit(ZipmixError, ValueError):
    """A fit ended on a clamp or boundary; information-based intervals are refused."""


class SingularInfo(ZipmixError, ArithmeticError):
    pass


class MeanUndefined(ZipmixError, ValueError):
    pass


class ImproperPosterior(ZipmixError, ValueError):
    pass


class DegenerateRatio(ZipmixError, ValueError):
    pass


class SizeLimit(ZipmixError, ValueError):
    pass


class ParseError(ZipmixError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)


class NegativeCount(ParseError):
    pass


class RaggedRows(ParseError):
    pass


class NotConvergedWarning(RuntimeWarning):
    """EM hit max_iter before meeting the stopping rule; the fit is still returned."""
