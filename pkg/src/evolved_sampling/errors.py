class NumericError(ArithmeticError):
    """A loss, gradient or activation came out non-finite."""


class FormatError(ValueError):
    """An input file (IDX, checkpoint, metrics CSV) does not match its format."""
