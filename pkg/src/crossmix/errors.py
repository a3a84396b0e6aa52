"""Exception types shared across the package."""


class CrossmixError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CrossmixError):
    """Invalid run configuration; carries the offending key path."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


class DimensionError(CrossmixError):
    """Array length does not match the grid it is attached to."""


class InitialDataError(CrossmixError):
    """Initial-data parameters produce an inadmissible state."""


class VacuumFluxError(CrossmixError):
    """Log-pressure flux requested across a face whose both neighbour
    cells sit below the density floor."""

    def __init__(self, face_index, message=None):
        self.face_index = face_index
        super().__init__(message or f"vacuum on both sides of face {face_index}")


class PositivityError(CrossmixError):
    """Time step could not be made small enough to keep densities
    nonnegative."""

    def __init__(self, cell_index, species, retries):
        self.cell_index = cell_index
        self.species = species
        self.retries = retries
        super().__init__(
            f"positivity failure in species {species} at cell {cell_index} "
            f"after {retries} halvings"
        )


class TransformUnavailableError(CrossmixError):
    """Transformed right-hand sides requested on a state with clamped
    ratio cells."""


class SolverError(CrossmixError):
    """Wraps a failure mid-run; retains the partial trajectory."""

    def __init__(self, cause, trajectory):
        self.cause = cause
        self.trajectory = trajectory
        super().__init__(str(cause))


class SegregationWarning(UserWarning):
    """More than 5% of cells needed ratio clamping."""
