"""Exception hierarchy shared by every solver."""


class DfnError(Exception):
    """Base class for all package errors."""


class ValidationError(DfnError):
    pass


class DisconnectedGraph(ValidationError):
    def __init__(self, components):
        self.components = [sorted(c) for c in components]
        super().__init__(
            f"graph has {len(self.components)} components: {self.components}"
        )


class InvalidBounds(ValidationError):
    pass


class NoSlack(ValidationError):
    pass


class MultipleSlack(ValidationError):
    pass


class InvalidLaw(ValidationError):
    pass


class ParseError(DfnError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column else "") + ")"
        super().__init__(message + where)


class SolverError(DfnError):
    pass


class MaxIterationsExceeded(SolverError):
    """Raised when Newton stops early; ``best`` carries the last iterate."""

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class SingularHessian(SolverError):
    pass


class InfeasibleFlow(DfnError):
    pass


class InfeasibleScenario(DfnError):
    pass


class NotConverged(SolverError):
    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class BarrierNonconvergence(SolverError):
    pass


class NodeLimit(SolverError):
    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


class MismatchedScenario(DfnError):
    pass


class NotGasNetwork(DfnError):
    pass


class NegativePressureBound(ValidationError):
    pass


class ZeroFriction(ValidationError):
    pass
