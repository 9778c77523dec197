"""Exception hierarchy. Each class carries a short machine-readable category
used by the command line to report failures on one line."""


class DialogActError(Exception):
    category = "error"


class DimensionError(DialogActError, ValueError):
    category = "dimension"


class ContractError(DialogActError, ValueError):
    category = "contract"


class FormatError(DialogActError, ValueError):
    category = "format"


class NumericError(DialogActError, ArithmeticError):
    category = "numeric"


class UndefinedCorrelationError(ContractError):
    category = "undefined-correlation"
