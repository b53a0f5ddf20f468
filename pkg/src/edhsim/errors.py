"""Exception types raised across the package."""


class EdhsimError(Exception):
    """Base class for all edhsim errors."""


class ParseError(EdhsimError):
    """A file (depth map, config, boundary set) could not be parsed."""


class DepthOutOfRangeError(EdhsimError):
    """A depth value lies outside the valid (0, z_limit] range."""

    def __init__(self, value, limit=None):
        if limit is None:
            msg = f"depth {value!r} m must be positive and finite"
        else:
            msg = f"depth {value!r} m outside (0, {limit!r}] m"
        super().__init__(msg)
        self.value = value
        self.limit = limit


class InvalidParamsError(EdhsimError):
    """Parameters violate a documented precondition."""


class DistanceExceedsRangeError(EdhsimError):
    """Round-trip time of flight does not fit inside one laser period."""


class ZeroBackgroundError(EdhsimError):
    """Signal-to-background ratio is undefined for zero background."""


class TooFewPhotonsError(EdhsimError):
    """Not enough pooled photons to place the requested quantiles."""


class PowerOfTwoError(EdhsimError):
    """Hierarchical histogramming requires a power-of-two bin count."""


class BinCountError(EdhsimError):
    """Requested equi-width bin count is unusable for this stream."""


class EmptyHistogramError(EdhsimError):
    """Peak lookup on a histogram with no bins."""


class BinPositionError(EdhsimError):
    """A time-bin position lies outside [0, B]."""


class ShapeMismatchError(EdhsimError):
    """Estimate and ground-truth grids have different shapes."""


class QuantileMismatchError(EdhsimError):
    """Two boundary sets track different quantile counts."""


class SweepValueError(EdhsimError):
    """A sweep value violates the swept parameter's valid range."""
