"""
Exceptions raised by splitcount
"""


class SplitCountError(Exception):
    """Base class for every splitcount failure"""


class ConfigError(SplitCountError, ValueError):
    """Invalid settings or command-line flags"""


class ParseError(SplitCountError, ValueError):
    """Malformed instance file"""

    def __init__(self, message: str, line: int = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InfeasibleDegrees(SplitCountError, ValueError):
    """Degree sequence that no edge subset of K_n can carry"""


class InfeasibleMargins(SplitCountError, ValueError):
    """Row/column sums that no 0-1 matrix can carry"""


class BudgetExceeded(SplitCountError):
    """Exact enumeration would visit more configurations than allowed"""


class DegenerateInput(SplitCountError, ValueError):
    """Statistic undefined for the given input"""


class EstimatorError(SplitCountError):
    """A run or estimator failed at runtime"""


class IterationLimitExceeded(EstimatorError):
    """Target level not reached within the iteration cap"""

    def __init__(self, message: str, traces=None):
        super().__init__(message)
        self.traces = list(traces or [])


class StagnationFailure(EstimatorError):
    """No strictly higher threshold is admissible"""

    def __init__(self, message: str, traces=None):
        super().__init__(message)
        self.traces = list(traces or [])


class ZeroOverlap(EstimatorError):
    """Two capture batches share no state; carries the partial result"""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class WindowOvershoot(EstimatorError):
    """Every retried auxiliary clause pushed the ratio below the window"""


class AuxLimitExceeded(EstimatorError):
    """Ratio window not reached within the auxiliary clause cap"""
