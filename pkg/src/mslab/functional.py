"""Discrete Mumford-Shah energies and competitor candidates.

The Dirichlet term sums squared difference quotients over the faces whose two
cells lie in the same mask, i.e. exactly the faces the solver couples, so the
discrete solution of the screened problem is the exact minimiser of the
discrete energy among fixed-crack candidates.  The fidelity term is the
midpoint rule on cells.  A piecewise candidate is charged the full measure
of its interface; a single whole-domain field has no jump.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np
from scipy import optimize

from .data import InputDatum
from .fields import (
    GridSpec,
    PiecewiseField,
    ScalarField,
    datum_field,
    dirichlet_faces,
    solve_piecewise,
    solve_screened_poisson,
    solve_whole,
)
from .geometry import Interface

Field = Union[PiecewiseField, ScalarField]


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    jump: float
    fidelity: float

    @property
    def total(self) -> float:
        return self.dirichlet + self.jump + self.fidelity

    def as_row(self):
        return [self.dirichlet, self.jump, self.fidelity, self.total]


def interface_measure(interface: Interface) -> float:
    return interface.measure


def _grid_of(u: Field) -> GridSpec:
    return u.grid


def _values(u: Field) -> np.ndarray:
    if isinstance(u, PiecewiseField):
        return u.combined()
    if not np.all(u.mask):
        raise ValueError("a whole-domain candidate must cover every cell")
    return u.values


def cell_values(g, grid: GridSpec) -> np.ndarray:
    """Cell values of a datum given as an InputDatum, a field, or an array."""
    if isinstance(g, InputDatum):
        return g.values(grid.centers()).reshape(grid.shape)
    if isinstance(g, (PiecewiseField, ScalarField)):
        if g.grid != grid:
            raise ValueError("datum and candidate live on different grids")
        return _values(g)
    arr = np.asarray(g, dtype=float)
    if arr.shape != tuple(grid.shape):
        raise ValueError("datum array does not match the grid")
    return arr


def ms_energy(u: Field, g, beta: float) -> EnergyBreakdown:
    """``int |grad u|^2 + H^{n-1}(S_u) + beta int (u - g)^2`` on the grid (``beta = 0`` gives F_0)."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    grid = _grid_of(u)
    h = grid.h
    if isinstance(u, PiecewiseField):
        dir_ = dirichlet_faces(u.inner.values, u.inner.mask, h) + dirichlet_faces(u.outer.values, u.outer.mask, h)
        jump = u.interface.measure
    else:
        dir_ = dirichlet_faces(u.values, u.mask, h)
        jump = 0.0
    fid = 0.0
    if beta > 0:
        diff = _values(u) - cell_values(g, grid)
        fid = beta * float(np.sum(diff * diff)) * grid.cell_volume
    return EnergyBreakdown(dir_, jump, fid)


def incremental_energy(z: Field, v_prev: Field, delta: float) -> EnergyBreakdown:
    """``int |grad z|^2 + H^{n-1}(S_z) + (1/delta) int (z - v_prev)^2``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return ms_energy(z, v_prev, 1.0 / delta)


def crack_free_energy_closed_form(beta: float, amplitude: float = 1.0, half_length: float = 1.0) -> float:
    """Energy of the whole-domain minimiser for ``g = +/- amplitude`` on ``(-L, L)`` split at 0."""
    rb = np.sqrt(beta)
    return float(2 * amplitude**2 * rb * np.tanh(rb * half_length))


def crossover_closed_form(amplitude: float = 1.0, half_length: float = 1.0, measure: float = 1.0) -> float:
    """``beta*`` where the crack-free energy equals the jump cost of the cracked minimiser."""
    f = lambda lb: crack_free_energy_closed_form(np.exp(lb), amplitude, half_length) - measure
    return float(np.exp(optimize.brentq(f, np.log(1e-8), np.log(1e8), xtol=1e-14)))


@dataclass
class Problem:
    """Grid, datum and fidelity weight, with cached solves used by the competitors."""

    grid: GridSpec
    g: InputDatum
    beta: float
    solver: dict = field(default_factory=dict)

    @cached_property
    def u_beta(self) -> PiecewiseField:
        return solve_piecewise(self.grid, self.g, self.beta, **self.solver)

    @cached_property
    def g_cells(self) -> np.ndarray:
        return cell_values(self.g, self.grid)

    @cached_property
    def crack_free(self) -> ScalarField:
        return solve_whole(self.grid, self.g_cells, self.beta, **self.solver)

    def energy(self, u: Field) -> EnergyBreakdown:
        return ms_energy(u, self.g_cells, self.beta)


def _scaled(problem: Problem, t: float) -> Field:
    if t == 0:
        return problem.crack_free
    u = problem.u_beta
    if t == 1:
        return u
    cf = problem.crack_free.values

    def mix(side: ScalarField):
        return side.with_values(t * side.values + (1 - t) * cf)

    return u.map(mix)


def make_competitor(kind: str, problem: Problem, param: Optional[float] = None) -> Field:
    """Competitors: ``crack_free``, ``input_datum``, ``jump_scaled`` (t), ``shifted_interface`` (offset)."""
    if kind == "crack_free":
        return problem.crack_free
    if kind == "input_datum":
        return datum_field(problem.grid, problem.g)
    if kind == "jump_scaled":
        t = float(param)
        if not 0 <= t <= 1:
            raise ValueError("jump_scaled needs t in [0, 1]")
        return _scaled(problem, t)
    if kind == "shifted_interface":
        shifted = problem.g.interface.shifted(float(param))
        grid = problem.grid
        m1, m2 = grid.side_masks(shifted)
        gv = problem.g_cells
        u1 = solve_screened_poisson(grid, gv, problem.beta, m1, side=1, interface=shifted, **problem.solver)
        u2 = solve_screened_poisson(grid, gv, problem.beta, m2, side=2, interface=shifted, **problem.solver)
        return PiecewiseField(u1, u2, shifted)
    raise ValueError(f"unknown competitor kind {kind!r}")


def default_competitors(problem: Problem, ts=(0.25, 0.5, 0.75, 0.9), shifts=None):
    """The competitor family used by minimality probes, as ``(label, field)`` pairs."""
    out = [("crack_free", make_competitor("crack_free", problem)),
           ("input_datum", make_competitor("input_datum", problem))]
    for t in ts:
        out.append((f"jump_scaled({t:g})", make_competitor("jump_scaled", problem, t)))
    if shifts is None:
        h = float(problem.grid.h[0])
        shifts = (4 * h, -4 * h)
    for s in shifts:
        try:
            out.append((f"shifted_interface({s:+.6g})", make_competitor("shifted_interface", problem, s)))
        except ValueError:
            pass
    return out


def _same(a: Field, b: Field) -> bool:
    if isinstance(a, PiecewiseField) != isinstance(b, PiecewiseField):
        return False
    if isinstance(a, PiecewiseField) and a.interface is not b.interface:
        return False
    return bool(np.array_equal(_values(a), _values(b)))


@dataclass
class Comparison:
    """Energy of a candidate against the competitor family."""

    energy: float
    competitors: dict
    ties: list

    @property
    def margin(self) -> float:
        return min(self.competitors.values()) - self.energy if self.competitors else float("inf")

    @property
    def strict(self) -> bool:
        return bool(self.margin > 0)


def compare_with_competitors(problem: Problem, u: Optional[Field] = None, ts=(0.25, 0.5, 0.75, 0.9),
                             shifts=None) -> Comparison:
    """Energy of ``u`` (default ``u_beta``) against :func:`default_competitors`.

    Competitors whose cell values coincide with ``u`` are ties, not rivals.
    """
    u = problem.u_beta if u is None else u
    comps, ties = {}, []
    for label, cand in default_competitors(problem, ts, shifts):
        if cand is u or _same(cand, u):
            ties.append(label)
        else:
            comps[label] = problem.energy(cand).total
    return Comparison(problem.energy(u).total, comps, ties)
