"""Exception types shared across the package."""


class HierannoError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(HierannoError):
    """Invalid configuration value (e.g. empty anonymization salt)."""


class IngestError(HierannoError):
    """The input stream itself could not be read (not a per-record problem)."""


class InfeasibleStratumError(HierannoError):
    """A stratum asks for more items than it contains."""

    def __init__(self, label: str, take: int, available: int):
        self.label = label
        self.take = take
        self.available = available
        super().__init__(
            f"stratum {label!r}: take={take} exceeds available member count {available}"
        )


class IntegrityError(HierannoError):
    """Cross-referenced data is inconsistent (unknown ids, mixed comments)."""


class UnknownGroupError(HierannoError):
    """A group name did not resolve against the protected-group registry."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"group name {name!r} not found in registry")


class RoutingError(HierannoError):
    """An answer arrived for a question whose gate is not open."""


class InsufficientRatersError(HierannoError):
    """An aggregate needs more raters than were supplied."""


class MatrixError(HierannoError):
    """A rating matrix cannot be built or violates its invariants."""

    def __init__(self, message: str, items: list | None = None):
        self.items = items or []
        super().__init__(message)


class UndefinedKappaError(HierannoError):
    """Fleiss' kappa is undefined (degenerate single-category marginals)."""


class CapacityError(HierannoError):
    """All experiment arms are full."""


class AuthorizationError(HierannoError):
    """The annotator is unknown, unassigned, or has not consented."""


class PendingAnnotatorsError(HierannoError):
    """A report was requested before all assigned annotators finished."""

    def __init__(self, pending: list[str]):
        self.pending = list(pending)
        super().__init__(f"annotators still working: {', '.join(self.pending)}")


class StoreError(HierannoError):
    """Event-store I/O or payload rejection."""
