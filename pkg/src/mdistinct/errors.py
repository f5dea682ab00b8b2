"""Shared exception types, one per CLI failure class."""

from __future__ import annotations


class MDistinctError(Exception):
    """Base class for all library errors."""


class ValidationError(MDistinctError):
    """Malformed input: schema mismatch, bad update model, broken file."""


class InfeasibilityError(MDistinctError):
    """The requested output cannot exist (not m-eligible, empty graph, ...)."""


class InconsistentHistoryError(InfeasibilityError):
    """A record's published history admits no feasible explanation."""


class CapExceededError(MDistinctError):
    """An internal enumeration cap was hit (path explosion, oracle size)."""
