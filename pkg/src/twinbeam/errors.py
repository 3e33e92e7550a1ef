"""Exception types raised across the simulator."""


class TwinBeamError(Exception):
    pass


class ConfigurationError(TwinBeamError, ValueError):
    """Invalid grid, physical parameter, or config-file content."""


class ResolutionError(ConfigurationError):
    """A pump feature is under-resolved by the grid."""


class StepSizeError(TwinBeamError):
    """Nonlinear step too coarse for the local coupling strength."""


class GeometryError(TwinBeamError, ValueError):
    """Detection region or shift window does not fit the data."""


class StatisticsError(TwinBeamError, ValueError):
    """Ensemble too small or degenerate for the requested statistic."""


class UndefinedCorrelationError(StatisticsError):
    pass


class ReportError(TwinBeamError):
    """Nothing to plot, or a results table is malformed."""


class ShotFailure(TwinBeamError):
    """A pipeline stage failed for one shot; carries the stage and shot id."""

    def __init__(self, stage: str, shot_id: str, message: str):
        super().__init__(stage, shot_id, message)
        self.stage = stage
        self.shot_id = shot_id
        self.message = message

    def __str__(self):
        return f"shot {self.shot_id}: stage '{self.stage}' failed: {self.message}"
