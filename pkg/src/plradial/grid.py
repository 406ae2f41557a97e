"""Radial grids on [0, r_max] and the cumulative quadrature primitives.

Two integral operators cover everything the iteration needs: a running
composite trapezoid, and the singular-weight transform
t -> t^(1-N) * integral_0^t s^(N-1) h(s) ds.  The latter integrates the
piecewise-linear interpolant of h against exact power moments, which keeps
full second-order accuracy down to t = 0 where a plain trapezoid on
s^(N-1)*h(s) would lose an order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

__all__ = [
    "RadialGrid",
    "GridFunction",
    "make_grid",
    "cumulative_integral",
    "weighted_inner_integral",
]

MIN_POINTS = 17


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Strictly increasing nodes r_0 = 0 < r_1 < ... < r_M."""

    nodes: np.ndarray
    grading: str = "uniform"
    ratio: float | None = None
    _power_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < MIN_POINTS:
            raise ValueError(f"a radial grid needs at least {MIN_POINTS} nodes")
        if nodes[0] != 0.0:
            raise ValueError("the first node must be exactly 0")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        nodes = nodes.copy()
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    def __len__(self) -> int:
        return int(self.nodes.size)

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    def powered_nodes(self, exponent: int) -> np.ndarray:
        """nodes**exponent, cached: the solve loop re-integrates every pass."""
        cached = self._power_cache.get(exponent)
        if cached is None:
            cached = self.nodes ** exponent
            cached.setflags(write=False)
            self._power_cache[exponent] = cached
        return cached


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a function at every node of a grid."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.nodes.shape:
            raise ValueError(
                f"expected {self.grid.nodes.size} values, got {values.shape}"
            )
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def make_grid(
    r_max: float,
    points: int,
    grading: str = "uniform",
    ratio: float | None = None,
) -> RadialGrid:
    """Build a grid of `points` nodes on [0, r_max].

    Geometric grading places r_k = r_max * (ratio^k - 1) / (ratio^M - 1),
    clustering nodes near 0.
    """
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    if points < MIN_POINTS:
        raise ValueError(f"points must be at least {MIN_POINTS}")
    if grading == "uniform":
        nodes = np.linspace(0.0, r_max, points)
    elif grading == "geometric":
        if ratio is None or ratio <= 1.0:
            raise ValueError("geometric grading needs ratio > 1")
        k = np.arange(points, dtype=float)
        nodes = r_max * (ratio ** k - 1.0) / (ratio ** (points - 1) - 1.0)
    else:
        raise ValueError(f"unknown grading {grading!r}")
    return RadialGrid(nodes=nodes, grading=grading, ratio=ratio)


def cumulative_integral(f: GridFunction) -> GridFunction:
    """Running composite trapezoid with F(0) = 0."""
    values = cumulative_trapezoid(f.values, f.grid.nodes, initial=0.0)
    return GridFunction(grid=f.grid, values=values)


def weighted_inner_integral(h: GridFunction, N: int) -> GridFunction:
    """t -> t^(1-N) * integral_0^t s^(N-1) h(s) ds, with value 0 at t = 0.

    The limit at 0 is exactly 0 for every continuous h and N >= 2, so the
    first node is hard-set rather than extrapolated.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    grid = h.grid
    mass = _weighted_mass(grid.nodes, h.values, N, grid=grid)
    out = np.zeros_like(mass)
    out[..., 1:] = mass[..., 1:] / grid.powered_nodes(N - 1)[1:]
    return GridFunction(grid=grid, values=out)


def _weighted_mass(
    x: np.ndarray, y: np.ndarray, N: int, grid: RadialGrid | None = None
) -> np.ndarray:
    """Running integral_0^x s^(N-1) y(s) ds for piecewise-linear y.

    y may carry leading batch dimensions; x must be strictly increasing and
    is integrated exactly against the power weight on each segment.
    """
    if grid is not None:
        xN = grid.powered_nodes(N)
        xN1 = grid.powered_nodes(N + 1)
    else:
        xN = x ** N
        xN1 = x ** (N + 1)
    a = x[:-1]
    dxN = (xN[1:] - xN[:-1]) / N
    # integral_a^b s^(N-1) (s - a) ds, nonnegative on every segment
    dmom = (xN1[1:] - xN1[:-1]) / (N + 1) - a * dxN
    ya = y[..., :-1]
    # overflowed iterates pass through here as inf; the caller checks finiteness
    with np.errstate(over="ignore", invalid="ignore"):
        slope = (y[..., 1:] - ya) / (x[1:] - a)
        segments = np.maximum(ya * dxN + slope * dmom, 0.0)
        mass = np.zeros(y.shape, dtype=float)
        np.cumsum(segments, axis=-1, out=mass[..., 1:])
    return mass


def _cumtrapz(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Running trapezoid along the last axis, starting at 0."""
    return cumulative_trapezoid(y, x, axis=-1, initial=0.0)
