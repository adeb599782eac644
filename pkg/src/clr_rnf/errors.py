"""Exception hierarchy shared across the toolkit.

Each class carries the process exit code the CLI uses when the error
escapes a command: 2 for usage/configuration problems, 3 for malformed
or invalid data files, 4 for structural inconsistencies in a network
graph or plan.
"""


class PruneToolError(Exception):
    exit_code = 1


class UsageError(PruneToolError):
    """Caller passed arguments outside the documented contract."""

    exit_code = 2


class ConfigError(UsageError):
    """A required configuration entry is missing or inconsistent."""


class FormatError(PruneToolError):
    """A file does not follow its documented layout."""

    exit_code = 3


class DataError(PruneToolError):
    """A file parses but holds invalid values (non-finite, wrong dims)."""

    exit_code = 3


class StructureError(PruneToolError):
    """An architecture graph or prune plan violates its invariants."""

    exit_code = 4
