"""Exception hierarchy shared across the package."""


class SalGpodeError(Exception):
    """Base class for all package errors."""


class ContractViolationError(SalGpodeError):
    """An operation was called with arguments violating its preconditions."""


class NumericalDegeneracyError(SalGpodeError):
    """A linear-algebra primitive failed even after jitter escalation."""


class DivergenceError(SalGpodeError):
    """The integrated state became non-finite.

    Carries the partial trajectory (times/states up to the last finite
    point) so callers can inspect how far the solution got.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class StepBudgetError(SalGpodeError):
    """The adaptive integrator exceeded its max_steps budget."""


class TrainingError(SalGpodeError):
    """The training objective became non-finite."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class NoFeasibleCandidateError(SalGpodeError):
    """No planner candidate satisfied the safety constraint.

    Carries the candidate with the highest estimated safety probability
    for diagnostics.
    """

    def __init__(self, message, best_candidate=None, best_xi=None):
        super().__init__(message)
        self.best_candidate = best_candidate
        self.best_xi = best_xi


class MeasurementFailureError(SalGpodeError):
    """The ground-truth simulator diverged while taking a measurement."""


class ConfigError(SalGpodeError):
    """Invalid experiment configuration (unknown keys, bad values)."""


class SchemaError(SalGpodeError):
    """A persisted artifact does not match the expected schema/version."""
