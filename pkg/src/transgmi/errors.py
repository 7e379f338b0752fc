"""Exception types raised across the package."""


class GmiError(Exception):
    """Base class for all package errors."""


class InvalidQuery(GmiError, ValueError):
    """A query falls outside the support a model can answer for."""


class QuadratureError(GmiError, ArithmeticError):
    """A numerical expectation did not converge or could not be resolved."""


class ProbabilityUnderflow(GmiError, ArithmeticError):
    """A Gaussian cell carries less probability than can be represented."""

    def __init__(self, lower, upper, log_prob):
        self.lower = lower
        self.upper = upper
        self.log_prob = log_prob
        super().__init__(
            f"cell ({lower}, {upper}) has probability exp({log_prob:.1f}) < 1e-300"
        )


class DegenerateChannel(GmiError, ValueError):
    """The channel carries no usable signal (e.g. zero output power)."""


class ConfigError(GmiError, ValueError):
    """Configuration failed validation; ``violations`` lists every problem."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
