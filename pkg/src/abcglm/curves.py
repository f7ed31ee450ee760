"""One-dimensional density curves tabulated on a grid."""

from dataclasses import dataclass, field

import numpy as np


def trapezoid(y, x):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def normalize_intervals(intervals):
    """Sorted tuple of (low, high) pairs; rejects overlaps and empty pieces."""
    pieces = sorted((float(lo), float(hi)) for lo, hi in intervals)
    if not pieces:
        raise ValueError("support needs at least one interval")
    for lo, hi in pieces:
        if not hi > lo:
            raise ValueError(f"interval ({lo}, {hi}) has non-positive length")
    for (_, hi), (lo, _) in zip(pieces, pieces[1:]):
        if lo <= hi:
            raise ValueError("support intervals must be disjoint")
    return tuple(pieces)


def in_support(x, intervals):
    x = np.asarray(x, dtype=float)
    inside = np.zeros(x.shape, dtype=bool)
    for lo, hi in intervals:
        inside |= (x >= lo) & (x <= hi)
    return inside


def support_grid(intervals, n_points=512, lo=None, hi=None):
    """Uniform grid over the hull of ``intervals`` with gap edges made exact.

    Each interior border gets an extra node one ulp into the gap, so the
    trapezoidal rule sees a jump instead of a linear ramp across the gap.
    Every finite border is itself a node.
    """
    intervals = normalize_intervals(intervals)
    lo = intervals[0][0] if lo is None else float(lo)
    hi = intervals[-1][1] if hi is None else float(hi)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("support_grid needs finite bounds")
    nodes = [np.linspace(lo, hi, int(n_points))]
    for (_, right), (left, _) in zip(intervals, intervals[1:]):
        nodes.append([right, np.nextafter(right, np.inf),
                      np.nextafter(left, -np.inf), left])
    for a, b in intervals:
        nodes.append([v for v in (a, b) if lo <= v <= hi])
    return np.unique(np.concatenate([np.asarray(n, dtype=float) for n in nodes]))


@dataclass(frozen=True, eq=False)
class DensityCurve:
    """A density tabulated on an ascending grid.

    ``support`` is a tuple of (low, high) intervals; ``warnings`` carries
    diagnostics such as a grid that does not cover the support, ``info``
    free-form settings (e.g. the bandwidth used).
    """

    grid: np.ndarray
    density: np.ndarray
    support: tuple = ((-np.inf, np.inf),)
    warnings: tuple = field(default=())
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        dens = np.asarray(self.density, dtype=float)
        if grid.ndim != 1 or grid.shape != dens.shape or grid.size < 2:
            raise ValueError("grid and density must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly ascending")
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise ValueError("density must be finite and non-negative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", dens)
        object.__setattr__(self, "support", normalize_intervals(self.support))

    @classmethod
    def from_values(cls, grid, values, support=((-np.inf, np.inf),), warnings=(), info=None):
        """Zero ``values`` outside ``support`` and renormalize on the grid."""
        grid = np.asarray(grid, dtype=float)
        support = normalize_intervals(support)
        values = np.where(in_support(grid, support), np.asarray(values, dtype=float), 0.0)
        total = trapezoid(values, grid)
        if not total > 0:
            raise ValueError("curve has zero mass on its grid")
        return cls(grid, values / total, support, tuple(warnings), dict(info or {}))

    def integral(self):
        return trapezoid(self.density, self.grid)

    def __call__(self, x):
        return np.interp(x, self.grid, self.density, left=0.0, right=0.0)

    def mean(self):
        return trapezoid(self.grid * self.density, self.grid)

    def argmax(self):
        return float(self.grid[np.argmax(self.density)])

    def mass(self, lo, hi):
        """Trapezoidal mass over [lo, hi], interpolating at the ends."""
        inner = (self.grid > lo) & (self.grid < hi)
        x = np.concatenate([[lo], self.grid[inner], [hi]])
        return trapezoid(self(x), x)
