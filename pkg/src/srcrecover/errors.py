"""Shared exception base for the toolkit.

Every operational failure raised by this package derives from ToolError so
the CLI can map it to exit code 1.  Module-specific exception classes live
next to the code that raises them.
"""


class ToolError(Exception):
    """Base class for all operational errors raised by srcrecover."""
