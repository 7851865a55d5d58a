"""Post-processing of converged fields."""
from __future__ import annotations

import math

import numpy as np

from ..grid_field import GridFunction


def shock_crossings(f: GridFunction, level: float, x_range=None):
    """Per column, the ``y`` where density crosses ``level`` (linear
    interpolation between cell centres; the crossing nearest the top when
    several exist).  Returns ``(x, y)`` arrays for columns with a crossing."""
    g = f.grid
    rho = f.component(0)
    xs, ys = g.x_centers(), g.y_centers()
    keep_x, keep_y = [], []
    for i, x in enumerate(xs):
        if x_range is not None and not (x_range[0] <= x <= x_range[1]):
            continue
        col = rho[:, i] - level
        idx = np.nonzero(np.sign(col[:-1]) * np.sign(col[1:]) < 0)[0]
        if idx.size == 0:
            continue
        j = idx[-1]
        t = col[j] / (col[j] - col[j + 1])
        keep_x.append(x)
        keep_y.append(ys[j] + t * (ys[j + 1] - ys[j]))
    return np.array(keep_x), np.array(keep_y)


def fit_shock_angle(f: GridFunction, rho_before: float, rho_after: float, x_range=None) -> float:
    """Inclination (radians, counter-clockwise from +x) of the straight line
    fitted to the mid-density isoline of a captured oblique shock."""
    x, y = shock_crossings(f, 0.5 * (rho_before + rho_after), x_range)
    if x.size < 2:
        raise ValueError("fewer than two columns cross the shock level")
    slope, _ = np.polyfit(x, y, 1)
    return math.atan(slope)
