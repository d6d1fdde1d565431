"""Shared exception types. The CLI maps any HankitError to exit code 1."""

from __future__ import annotations


class HankitError(Exception):
    """Base class for every domain error raised by this package."""


class EmptyUserError(HankitError):
    """A user reached the model with zero unmasked tweets."""
