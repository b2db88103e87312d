"""
Exception subclasses for lsmcport specific errors
"""
class LSMCError(Exception):
    """A portfolio solver related error occurred."""


class ConfigurationError(LSMCError):
    """
    The run configuration file is missing or incorrect. All field-level
    problems found are kept in ``messages``.
    """
    def __init__(self, messages=()):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__('; '.join(self.messages) or 'invalid configuration')


class InputError(LSMCError, ValueError):
    """Numeric input is malformed or not finite."""


class CalibrationError(LSMCError):
    """The market model could not be calibrated from the given data."""


class UsageError(LSMCError, ValueError):
    """An operation was called with arguments it cannot accept."""


class UtilityDomainError(LSMCError, ValueError):
    """A utility function was evaluated outside of its domain."""
