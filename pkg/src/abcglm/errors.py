"""Exception hierarchy; the CLI maps these onto exit codes."""


class AbcError(Exception):
    """Base class for toolkit errors."""


class ConfigError(AbcError, ValueError):
    """Invalid user input (config files, CLI flags, malformed tables)."""


class DegenerateError(AbcError, ArithmeticError):
    """A numerical computation cannot proceed (singular, empty, rank deficient)."""


class EmptyTableError(DegenerateError):
    """A rejection run accepted nothing."""

    def __init__(self, proposals, message=None):
        self.proposals = proposals
        super().__init__(message or f"no proposal accepted out of {proposals}")


class RankDeficiencyError(DegenerateError):
    """A regression design matrix does not have full column rank."""

    def __init__(self, columns, message=None):
        self.columns = tuple(columns)
        super().__init__(
            message or "design matrix is rank deficient; collinear columns: "
            + ", ".join(self.columns)
        )


class NotPositiveDefiniteError(DegenerateError):
    """A covariance matrix that must be SPD is not."""
