"""Exception types shared across the toolkit.

Every error raised by the library proper derives from FlowmarkError so
callers (and the CLI) can distinguish our failures from genuine bugs.
"""

from __future__ import annotations


class FlowmarkError(Exception):
    """Base class for all toolkit errors."""


class NonGenerativeModel(FlowmarkError):
    """A flow model that cannot synthesize flows was asked to generate one."""


class InvalidDuration(FlowmarkError):
    """Flow duration must be positive."""


class NegativeWindow(FlowmarkError):
    """Window length must be positive."""


class WindowTooLong(FlowmarkError):
    """Window length exceeds the flow duration."""


class InvalidProbability(FlowmarkError):
    """Probability outside the open interval (0, 1)."""


class InvalidWindow(FlowmarkError):
    """Window length must be positive for rate calibration."""


class BadFraction(FlowmarkError):
    """clear_fraction must lie in (0, 1)."""


class FlowTooShort(FlowmarkError):
    """Flow does not span the watermark window."""


class SearchSpaceTooLarge(FlowmarkError):
    """Exhaustive offset enumeration would exceed the configured cap."""


class BadDelta(FlowmarkError):
    """Offset step delta must be positive."""


class BadProbability(FlowmarkError):
    """Probability outside the half-open interval (0, 1]."""


class ConfigError(FlowmarkError):
    """Malformed configuration: unknown section/key, bad value, missing entry."""


class InfeasibleScenario(FlowmarkError):
    """Requested experiment cannot succeed for the configured parameters."""
