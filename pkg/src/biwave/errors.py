"""Exception types shared across the package."""


class BiwaveError(Exception):
    pass


class BelowInjectivityThreshold(BiwaveError, ValueError):
    """A point is too close to the centre of the sphere for the nearest-point map."""

    def __init__(self, min_norm, threshold):
        self.min_norm = float(min_norm)
        self.threshold = float(threshold)
        super().__init__(
            f"point norm {self.min_norm:.3e} below injectivity threshold {self.threshold:.3e}"
        )


class UnsupportedOrder(BiwaveError, ValueError):
    pass


class OrderTooHigh(BiwaveError, ValueError):
    pass


class NegativeDelta(BiwaveError, ValueError):
    pass


class NonLatticeShift(BiwaveError, ValueError):
    pass


class EpsilonOutOfRange(BiwaveError, ValueError):
    pass


class OutsideTube(BiwaveError, ValueError):
    def __init__(self, distance, threshold):
        self.distance = float(distance)
        self.threshold = float(threshold)
        super().__init__(
            f"mollified data at sup distance {self.distance:.3e} from the target "
            f"(tube radius {self.threshold:.3e})"
        )


class ConfigError(BiwaveError, ValueError):
    pass


class NumericalAbort(BiwaveError, RuntimeError):
    """Base for aborts during time stepping.

    Carries the last healthy state and the records produced so far, so callers
    can write out a flagged partial trajectory.
    """

    def __init__(self, message, step=None, t=None, state=None, records=None):
        super().__init__(message)
        self.step = step
        self.t = t
        self.state = state
        self.records = list(records) if records is not None else []


class NonFinite(NumericalAbort):
    pass


class ConstraintEscape(NumericalAbort):
    pass
