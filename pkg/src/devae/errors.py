"""Error taxonomy shared across the package.

Exit-code mapping used by the CLI: ConfigurationError -> 2, DataError -> 3,
NumericalAbort -> 4. Plain ValueError/IndexError mark caller bugs (usage
errors) and are not translated.
"""


class ConfigurationError(Exception):
    """Invalid configuration: bad shapes, bad hyperparameters, bad config keys."""


class DataError(Exception):
    """Invalid data: out-of-range targets, degenerate factor specs, corrupt files."""


class NumericalAbort(RuntimeError):
    """Non-finite value reached the training loss; carries a diagnostic snapshot."""

    def __init__(self, message: str, iteration: int | None = None, term: str | None = None):
        super().__init__(message)
        self.iteration = iteration
        self.term = term
