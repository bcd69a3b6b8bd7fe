"""Exception hierarchy shared across the package."""


class QARegError(Exception):
    """Base class for all errors raised by qareg."""


class UsageError(QARegError, ValueError):
    """Invalid arguments: bad dimensions, non-positive bandwidths, empty grids."""


class DimensionMismatch(UsageError):
    pass


class NoNeighbors(QARegError):
    """No sample point lies within the bandwidth of the query point.

    ``min_distance`` is the smallest observed distance, so callers can
    enlarge ``h`` past it.
    """

    def __init__(self, min_distance: float, h: float):
        self.min_distance = float(min_distance)
        self.h = float(h)
        super().__init__(
            f"no sample point within h={h:g} of the query "
            f"(closest at distance {min_distance:g})"
        )


class DegenerateVariance(QARegError):
    """Asymptotic variance estimate is zero, so no statistic can be standardized."""


class ConvergenceError(QARegError):
    pass


class SelectionError(QARegError):
    """Bandwidth selection failed: no grid value yields any defined leave-one-out fit."""


class ExperimentError(QARegError):
    """A Monte Carlo experiment cannot produce a trustworthy report."""
