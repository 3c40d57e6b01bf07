"""Exception types shared across the package."""


class AlignmentError(ValueError):
    """Counts, probabilities or datasets that do not belong together."""


class DomainError(ValueError):
    """An argument outside the domain where a quantity is defined."""


class UnsupportedSpecError(ValueError):
    """A generator spec that an analysis cannot normalize."""


class NumericalError(RuntimeError):
    """A numerical routine failed (e.g. a root could not be bracketed)."""
