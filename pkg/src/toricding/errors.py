"""Exception base class shared by all toricding modules."""


class ToricDingError(Exception):
    """Base class for errors raised by toricding."""
