"""Exception hierarchy shared across the package."""


class SchedMpcError(Exception):
    """Base class for all errors raised by schedmpc."""


class InvalidMatrix(SchedMpcError):
    """Matrix input violates a structural invariant (non-finite, asymmetric, ...)."""


class InvalidModel(SchedMpcError):
    """Model parameters are inconsistent (dimensions, definiteness, widths)."""


class DimensionMismatch(SchedMpcError):
    """Operands have incompatible dimensions."""


class SolverError(SchedMpcError):
    """A numerical solver failed to produce a trustworthy answer."""


class Unbounded(SchedMpcError):
    """An operation required a bounded set or program but got an unbounded one."""


class NotConverged(SchedMpcError):
    """Fixed-point iteration hit its iteration cap."""

    def __init__(self, max_iter, message=None):
        self.max_iter = max_iter
        super().__init__(message or f"no fixed point after {max_iter} iterations")


class VerificationFailed(SchedMpcError):
    """An independently re-checked inequality or inclusion does not hold."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"verification failed at index {index}")


class SdpInfeasible(SchedMpcError):
    """The synthesis LMIs admit no solution."""


class InfeasibleProblem(SchedMpcError):
    """The online MPC problem has no feasible schedule/input pair."""

    def __init__(self, step=None, message=None):
        self.step = step
        super().__init__(message or f"MPC problem infeasible at step {step}")


class InsufficientTokens(SchedMpcError):
    """A transmission was requested with too few tokens in the bucket."""


class NotInTerminalSet(SchedMpcError):
    """Terminal controller evaluated outside its terminal region."""


class ConfigError(SchedMpcError):
    """A configuration file is malformed."""

    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or f"invalid config field: {field}")
