"""Exception types shared across the package."""


class ConfigurationError(Exception):
    """Inconsistent dimensions, invalid config values, or contract violations."""


class NonFiniteObjectiveError(Exception):
    """The objective (or a derivative of it) evaluated to a non-finite value.

    Carries the first quadrature point at which the integrand went bad, when
    it can be located (material inversion in the 2D problems, overflow).
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class TrainingAborted(Exception):
    """A training run hit a non-finite loss mid-run.

    ``epoch`` is the index of the failed step; ``record`` holds the trajectory
    up to the last finite state.
    """

    def __init__(self, epoch, record):
        super().__init__(f"training aborted at epoch {epoch}: non-finite loss")
        self.epoch = epoch
        self.record = record


class NoNullDirectionError(Exception):
    """The Gram matrix is full-rank at the working threshold."""


class ProbeFailure(Exception):
    """A landscape probe could not produce its contracted result."""
