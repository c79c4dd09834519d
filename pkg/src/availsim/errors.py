class ValidationError(ValueError):
    """Input document or argument violates a model invariant."""


class BudgetExceededError(RuntimeError):
    """Exhaustive enumeration would exceed the configured subset budget."""
