"""
Exceptions raised by the scheduling core.
Argument errors stay plain ValueError; these cover the two cases callers
need to tell apart.
"""


class InvariantViolation(RuntimeError):
    """
    A simulation invariant was broken (capacity overrun, duplicate delivery,
    request for a chunk the uploader does not hold).
    """


class EnumerationBudgetExceeded(ValueError):
    """
    An exhaustive oracle was asked to enumerate more candidates than its budget allows.
    """
