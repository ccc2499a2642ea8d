"""Exception hierarchy shared by every module in the package."""


class MBIError(Exception):
    """Base class for all errors raised by :mod:`mbi`."""


# numerics

class NonFiniteResult(MBIError, ArithmeticError):
    """A NaN or infinity appeared where only finite reals are admitted."""


class NonFiniteAction(NonFiniteResult):
    pass


class NonFiniteLoss(NonFiniteResult):
    pass


class UnboundVariable(MBIError, KeyError):
    def __str__(self):
        return f"unbound variable {self.args[0]!r}"


class StaleCache(MBIError):
    """Backward pass requested for bindings other than the last forward pass."""


# graph validation

class GraphError(MBIError, ValueError):
    pass


class DuplicateNode(GraphError):
    pass


class NoLossNode(GraphError):
    pass


class MultipleLossNodes(GraphError):
    pass


class DanglingEdge(GraphError):
    pass


class CycleDetected(GraphError):
    pass


class DisconnectedNode(GraphError):
    """A node has no directed path to the loss node."""


# agents / mechanism

class NonConvexCost(MBIError, ValueError):
    pass


class UnknownAgent(MBIError, KeyError):
    pass


# bayes / oracle

class SCCViolation(MBIError):
    """Allocation is not monotone in the agent's type."""


class GridTooLarge(MBIError, ValueError):
    pass


class NonPositiveLambda(MBIError, ValueError):
    pass


# scenarios / cli

class UnknownScenario(MBIError, KeyError):
    def __str__(self):
        return f"unknown scenario {self.args[0]!r}"


class ConfigError(MBIError, ValueError):
    """Base for configuration-file problems; carries the 1-based line number."""

    def __init__(self, line, reason):
        super().__init__(line, reason)
        self.line = line
        self.reason = reason

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.reason}"


class ParseError(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


class TypeMismatch(ConfigError):
    pass
