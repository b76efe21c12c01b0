"""Exception types raised across the package."""


class UndefinedConditional(ValueError):
    """A conditional was requested for a prefix with zero marginal mass."""

    def __init__(self, prefix):
        self.prefix = tuple(prefix)
        super().__init__(f"undefined conditional: prefix {self.prefix} has zero probability")


class BudgetExceeded(RuntimeError):
    """The sequence space is larger than the configured enumeration budget."""

    def __init__(self, size, budget):
        self.size = size
        self.budget = budget
        super().__init__(f"instance too large: {size} sequences exceeds budget {budget}")


class TieDetected(ValueError):
    """Raised by the ``error_on_tie`` policy when an argmax is ambiguous."""

    def __init__(self, candidates):
        self.candidates = [tuple(c) for c in candidates]
        super().__init__(f"tie detected between continuations {self.candidates}")


class SupportViolation(ValueError):
    """A computation that needs full support met a zero conditional."""
