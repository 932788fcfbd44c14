"""Smooth evaluators of the side solutions ``u_1`` and ``u_2``.

The calibration needs pointwise values, gradients and Laplacians of the
solution on each side, up to the interface.  They come either from closed
forms (:class:`mslab.data.ModalFunction`) or from a grid solution through an
even-periodic cubic spline, whose derivative vanishes exactly at both ends of
the side interval, matching the Neumann condition.
"""
from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from .data import ModalFunction
from .fields import ScalarField, solve_piecewise, GridSpec
from .geometry import PointInterface


class SplineSide:
    """Spline through a 1D side field, reflected evenly at both ends of its interval."""

    def __init__(self, field: ScalarField, a: float, b: float):
        xs = field.grid.axes()[0][field.mask]
        vs = field.values[field.mask]
        period = 2.0 * (b - a)
        ext_x = np.concatenate([xs, 2 * b - xs[::-1], [xs[0] + period]])
        ext_v = np.concatenate([vs, vs[::-1], [vs[0]]])
        self.a, self.b, self.period = a, b, period
        self.spline = CubicSpline(ext_x, ext_v, bc_type="periodic")
        self._x0 = xs[0]

    def evaluate(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        t = self._x0 + np.mod(x[:, 0] - self._x0, self.period)
        val = self.spline(t)
        grad = self.spline(t, 1)[:, None]
        lap = self.spline(t, 2)
        return val, grad, lap


def side_solutions(g, beta: float, grid: GridSpec | None = None, **solver_kw):
    """Evaluators for ``u_1`` and ``u_2``.

    Closed forms are used when the datum admits them; otherwise a 1D grid
    solution is splined.  2D data without a closed form are not supported.
    """
    exact = g.exact_solution(beta)
    if exact is not None:
        return exact, "closed-form"
    if not isinstance(g.interface, PointInterface):
        raise NotImplementedError("2D side solutions are only available for radial presets with closed forms")
    if grid is None:
        raise ValueError("a grid is required when no closed form is available")
    u = solve_piecewise(grid, g, beta, **solver_kw)
    lo, hi = g.domain.bounds[0]
    x0 = g.interface.x0
    return (SplineSide(u.inner, lo, x0), SplineSide(u.outer, x0, hi)), "spline"


__all__ = ["SplineSide", "side_solutions", "ModalFunction"]
