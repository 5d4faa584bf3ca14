"""
Exception hierarchy for pirlab.
"""


class PIRLabError(Exception):
    """Base class for all pirlab errors."""
    pass


class InvalidArgumentError(PIRLabError, ValueError):
    """Raised when an operation receives an out-of-contract argument."""
    pass


class BitRefRangeError(PIRLabError, IndexError):
    """Raised when a bit reference points outside the message store."""
    pass


class WireFormatError(PIRLabError):
    """Raised when a frame cannot be parsed; carries the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DecodeError(PIRLabError):
    """Raised when a transcript does not match the plan it is decoded against."""
    pass


class CapabilityRefusedError(PIRLabError):
    """Raised when a checker refuses a configuration it cannot handle exactly."""
    pass


class UsageError(PIRLabError):
    """Raised for invalid command-line usage."""
    pass
