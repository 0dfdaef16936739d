"""Exception hierarchy.

Every error raised by the library derives from :class:`ContextualROError`, so
callers (and the command-line front end) can map them to exit codes.
"""


class ContextualROError(Exception):
    code = "error"


class InputError(ContextualROError):
    code = "input_error"


class LpStalled(ContextualROError):
    code = "lp_stalled"


class EmptyUncertaintySet(ContextualROError):
    """Budget below the distance from the context to the covariate hull."""

    code = "empty_set"

    def __init__(self, gamma, gamma0, reason=None):
        self.gamma = gamma
        self.gamma0 = gamma0
        super().__init__(reason or f"uncertainty set is empty: gamma={gamma!r} < gamma0={gamma0!r}")


class IncompleteRecourse(ContextualROError):
    code = "incomplete_recourse"

    def __init__(self, message, theta=None):
        self.theta = theta
        super().__init__(message)


class UnboundedOracle(ContextualROError):
    code = "unbounded_oracle"


class BigMTooSmall(ContextualROError):
    code = "big_m_too_small"


class FirstStageInfeasible(ContextualROError):
    code = "infeasible"


class PoolError(ContextualROError):
    code = "pool_error"


class PoolCorrupt(PoolError):
    code = "pool_corrupt"


class FingerprintMismatch(PoolError):
    code = "fingerprint_mismatch"


class PoolValidationError(PoolError):
    code = "pool_invalid"

    def __init__(self, message, entry=None, row=None):
        self.entry = entry
        self.row = row
        super().__init__(message)


class CcgStalled(ContextualROError):
    code = "ccg_stalled"


class LimitReached(ContextualROError):
    """A node or iteration limit stopped a solve before optimality was proven."""

    code = "limit"
