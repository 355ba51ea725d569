"""Exception hierarchy. The CLI maps each category onto an exit code."""


class SailError(Exception):
    exit_code = 1


class ConfigError(SailError, ValueError):
    """Invalid configuration or call parameters."""

    exit_code = 2

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NumericError(SailError, ArithmeticError):
    """A loss, logit or gradient became non-finite."""

    exit_code = 3

    def __init__(self, message, batch_index=None, step=None, pair_id=None):
        super().__init__(message)
        self.batch_index = batch_index
        self.step = step
        self.pair_id = pair_id


class DegenerateSetError(SailError):
    """All candidates in a set scored identically, so no best/worst pair exists."""

    exit_code = 3


class ArtifactIOError(SailError, OSError):
    exit_code = 4
