"""Exception types raised across the package."""


class PDMLError(Exception):
    """Base class for all package errors."""


class InvalidEdge(PDMLError):
    pass


class DisconnectedGraph(PDMLError):
    pass


class InfeasibleEdgeCount(PDMLError):
    pass


class NumericalFailure(PDMLError):
    pass


class InvalidEpsilon(PDMLError, ValueError):
    pass


class ParseError(PDMLError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDataset(PDMLError):
    pass


class TooFewSamples(PDMLError):
    pass


class DimensionMismatch(PDMLError, ValueError):
    pass


class InnerSolverDiverged(PDMLError):
    def __init__(self, message, iteration=None, server=None):
        self.iteration = iteration
        self.server = server
        ctx = []
        if iteration is not None:
            ctx.append(f"iteration {iteration}")
        if server is not None:
            ctx.append(f"server {server}")
        if ctx:
            message = f"{message} ({', '.join(ctx)})"
        super().__init__(message)


class SolverDiverged(PDMLError):
    pass


class NoFeasibleParams(PDMLError):
    def __init__(self, message, closest_margin=None):
        self.closest_margin = closest_margin
        super().__init__(message)


class RhoOutOfRange(PDMLError, ValueError):
    pass


class EmptyTestSet(PDMLError):
    pass


class ConfigError(PDMLError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
