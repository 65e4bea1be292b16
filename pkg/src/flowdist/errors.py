"""Exception hierarchy shared by all flowdist modules."""


class FlowDistError(Exception):
    """Base class for all flowdist errors."""


class InvalidArgumentError(FlowDistError, ValueError):
    """A precondition on an argument was violated."""


class NumericFailureError(FlowDistError, ArithmeticError):
    """A numerical computation produced non-finite values or failed to converge."""


class FormatError(FlowDistError, ValueError):
    """A byte stream does not conform to the expected file format."""


class RangeError(FlowDistError, ValueError):
    """A value falls outside the representable range of a codec."""


class EmptyDomainError(FlowDistError, ValueError):
    """A reduction was requested over an empty set of pixels."""
