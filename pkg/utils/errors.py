"""Error taxonomy shared by every module of the visuo-tactile toolkit."""

from typing import Optional


class ToolkitError(Exception):
    """Base class for all toolkit errors.

    Every subclass carries a machine-parsable ``code`` and the process exit
    status the CLI uses when the error reaches the top level.
    """

    code = "E_TOOLKIT"
    exit_status = 1

    def __init__(self, message: str, *, entry_id: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.entry_id = entry_id

    def one_line(self) -> str:
        """Render the single-line form printed by the CLI."""
        text = " ".join(self.message.split())
        return f"error={self.code} message={text}"


class ValidationError(ToolkitError, ValueError):
    """Input violates an operation precondition (shape, range, count)."""

    code = "E_VALIDATION"
    exit_status = 2


class LoadError(ToolkitError):
    """A dataset entry or file could not be read."""

    code = "E_LOAD"
    exit_status = 3

    def __init__(self, message: str, *, entry_id: Optional[str] = None):
        if entry_id is not None and entry_id not in message:
            message = f"entry '{entry_id}': {message}"
        super().__init__(message, entry_id=entry_id)


class ConfigurationError(ToolkitError):
    """A model bundle or task spec does not support the requested operation."""

    code = "E_CONFIG"
    exit_status = 4


class NumericError(ToolkitError, ArithmeticError):
    """Non-finite values or a violated numeric guarantee."""

    code = "E_NUMERIC"
    exit_status = 5


class CheckpointError(ToolkitError):
    """Checkpoint archive is missing, corrupt, or inconsistent with its configs."""

    code = "E_CHECKPOINT"
    exit_status = 6


class MissingArgumentError(ToolkitError):
    """A subcommand was invoked without a required argument."""

    code = "E_MISSING_ARG"
    exit_status = 7


class UnknownCommandError(ToolkitError):
    """The CLI received a subcommand it does not know."""

    code = "E_UNKNOWN_COMMAND"
    exit_status = 8
