"""Exception hierarchy shared by all modules."""


class SemipermError(Exception):
    """Base class for every error raised by this package."""


class InvalidCurveError(SemipermError, ValueError):
    pass


class InvalidEnvironmentError(SemipermError, ValueError):
    pass


class StepTooLargeError(SemipermError, RuntimeError):
    """The Euler step left the domain even after reflection."""


class InvalidInitialConditionError(SemipermError, ValueError):
    pass


class DegenerateDomainError(SemipermError, RuntimeError):
    pass


class MissingTraceError(SemipermError, ValueError):
    """A dense trace was required but the path was simulated without one."""


class InvalidMeasureError(SemipermError, ValueError):
    pass


class InvalidInputError(SemipermError, ValueError):
    pass


class ConfigurationError(SemipermError, ValueError):
    pass


class IngestError(SemipermError, ValueError):
    def __init__(self, message, rows=()):
        self.rows = list(rows)
        if self.rows:
            shown = ", ".join(str(r) for r in self.rows[:20])
            more = "" if len(self.rows) <= 20 else f" (+{len(self.rows) - 20} more)"
            message = f"{message} [rows: {shown}{more}]"
        super().__init__(message)
