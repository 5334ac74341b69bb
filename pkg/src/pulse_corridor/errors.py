"""Exception hierarchy shared by all modules."""


class CorridorError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CorridorError, ValueError):
    """An argument lies outside the domain of the function."""


class SingularityError(DomainError):
    """Evaluation at (or too close to) a pole."""


class DegeneratePointsError(DomainError):
    """Divided difference requested on coincident nodes without derivatives."""


class SingularSystemError(CorridorError, ValueError):
    """Linear system is singular or too ill-conditioned to trust."""


class ValidationError(CorridorError, ValueError):
    """Model or configuration parameters violate their invariants."""


class DistinctnessError(ValidationError):
    """Plant rate constants are not pairwise distinct."""


class UnreachableDoseError(CorridorError):
    """No input in the admissible bracket produces the requested jump."""


class AnalysisError(CorridorError):
    """Cycle analysis failed (e.g. no interior extremum found)."""


class UnreachableCorridorError(CorridorError):
    """The requested corridor ratio cannot be met on the period range."""


class DegenerateCycleError(CorridorError):
    """The periodic output is flat, so no dose can be computed."""


class SaturationError(CorridorError):
    """The design point sits on a clamped segment of a modulation function."""


class NoStabilizingSlopesError(CorridorError):
    """No slope pair on the search grid yields a Schur-stable Jacobian."""


class SimulationAbort(CorridorError):
    """Simulation could not continue past a firing event."""

    def __init__(self, message, event_index):
        super().__init__(f"event {event_index}: {message}")
        self.event_index = event_index
