"""
Error Types

This module defines the exception hierarchy shared by every package in the
repository. Each error also derives from the closest built-in exception so
callers can catch either the specific type or the familiar built-in one.
"""


class GrokLabError(Exception):
    """Base class for all errors raised by this repository."""


class DimensionError(GrokLabError, ValueError):
    """Raised when tensor shapes are incompatible for an operation."""


class NumericError(GrokLabError, ArithmeticError):
    """Raised when an operation receives NaN or infinite values."""


class TokenIndexError(GrokLabError, IndexError):
    """Raised when a class label or token id falls outside its valid range."""


class ContractError(GrokLabError, RuntimeError):
    """Raised when a caller violates an operation's calling contract."""
