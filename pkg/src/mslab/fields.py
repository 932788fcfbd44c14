"""Cell-centred grids, masked fields and the screened Neumann solver.

A field lives on the cells selected by a boolean mask.  The discrete
Laplacian only couples neighbouring cells that both belong to the mask;
faces to cells outside the mask (or outside the grid) carry zero flux, which
is the ghost-reflection form of the homogeneous Neumann condition.  Splitting
the mask along the interface therefore decouples the two sides completely.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .geometry import Domain, Interface, PointInterface

log = logging.getLogger(__name__)


class NonConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class SideMismatchError(ValueError):
    """Sampling a side field at a point that belongs to the other side."""


class ThinMaskError(ValueError):
    """Mask too thin for the second-order difference stencils."""


@dataclass(frozen=True)
class GridSpec:
    domain: Domain
    cells: tuple

    def __post_init__(self):
        cells = tuple(int(n) for n in np.atleast_1d(self.cells))
        if len(cells) != self.domain.dim:
            raise ValueError("one cell count per axis is required")
        if min(cells) < 8:
            raise ValueError("at least eight cells per axis are required")
        object.__setattr__(self, "cells", cells)

    @property
    def dim(self):
        return self.domain.dim

    @property
    def shape(self):
        return self.cells

    @property
    def h(self) -> np.ndarray:
        return (self.domain.hi - self.domain.lo) / np.array(self.cells)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axes(self):
        return [lo + (np.arange(n) + 0.5) * hk for (lo, _), n, hk in zip(self.domain.bounds, self.cells, self.h)]

    def centers(self) -> np.ndarray:
        """All cell centres, shape ``(ncells, dim)``, row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dim)

    def side_masks(self, interface: Interface):
        """Boolean masks of side 1 and side 2 cells."""
        if isinstance(interface, PointInterface):
            lo = self.domain.bounds[0][0]
            j = (interface.x0 - lo) / self.h[0]
            if abs(j - round(j)) > 1e-9:
                raise ValueError(
                    f"interface point {interface.x0} does not lie on a cell face of the {self.cells[0]}-cell grid"
                )
        d = interface.signed_distance(self.centers()).reshape(self.shape)
        inner = d < 0
        return inner, ~inner


@dataclass(frozen=True)
class ScalarField:
    """Values on the masked cells of a grid (NaN elsewhere)."""

    grid: GridSpec
    mask: np.ndarray
    values: np.ndarray
    side: Optional[int] = None
    interface: Optional[Interface] = None

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool).reshape(self.grid.shape)
        v = np.where(m, np.asarray(self.values, dtype=float).reshape(self.grid.shape), np.nan)
        m.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "values", v)

    def filled(self, fill=0.0) -> np.ndarray:
        return np.where(self.mask, self.values, fill)

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, self.mask, values, self.side, self.interface)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values[self.mask])))


@dataclass(frozen=True)
class PiecewiseField:
    """One field per side of an interface."""

    inner: ScalarField
    outer: ScalarField
    interface: Interface

    @property
    def grid(self):
        return self.inner.grid

    def side(self, i) -> ScalarField:
        return self.inner if i == 1 else self.outer

    def combined(self) -> np.ndarray:
        return np.where(self.inner.mask, self.inner.values, self.outer.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.combined())))

    def map(self, fn) -> "PiecewiseField":
        return PiecewiseField(fn(self.inner), fn(self.outer), self.interface)


def _pair_mask(mask, axis):
    lo = [slice(None)] * mask.ndim
    hi = [slice(None)] * mask.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi), mask[tuple(lo)] & mask[tuple(hi)]


def masked_laplacian(u, mask, h) -> np.ndarray:
    """Five-point (three-point in 1D) Laplacian with zero flux across the mask boundary."""
    u = np.where(mask, u, 0.0)
    out = np.zeros_like(u)
    for ax in range(u.ndim):
        lo, hi, both = _pair_mask(mask, ax)
        flux = np.where(both, u[hi] - u[lo], 0.0) / h[ax] ** 2
        out[lo] += flux
        out[hi] -= flux
    return np.where(mask, out, 0.0)


def _neighbour_count(mask, h):
    out = np.zeros(mask.shape)
    for ax in range(mask.ndim):
        lo, hi, both = _pair_mask(mask, ax)
        out[lo] += both / h[ax] ** 2
        out[hi] += both / h[ax] ** 2
    return out


def dirichlet_faces(u, mask, h) -> float:
    """``sum over in-mask faces of ((u_i - u_j)/h)^2 * cell volume``."""
    u = np.where(mask, u, 0.0)
    vol = float(np.prod(h))
    total = 0.0
    for ax in range(u.ndim):
        lo, hi, both = _pair_mask(mask, ax)
        du = np.where(both, u[hi] - u[lo], 0.0) / h[ax]
        total += float(np.sum(du * du)) * vol
    return total


def solve_screened_poisson(
    grid: GridSpec,
    g,
    beta: float,
    mask=None,
    *,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
    jacobi: bool = False,
    side: Optional[int] = None,
    interface: Optional[Interface] = None,
) -> ScalarField:
    """Solve ``(beta I - Lap_h) u = beta g`` on the masked cells by conjugate gradients.

    Stops once the max-norm residual is at most ``tol * beta * |g|_inf``, or
    at the roundoff floor ``4 eps |A|_inf |g|_inf`` when that is larger
    (small ``beta`` on fine grids).  The initial guess is ``g`` itself.
    """
    if not beta > 0:
        raise ValueError("beta must be positive (the pure Neumann problem is singular)")
    if mask is None:
        mask = np.ones(grid.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool).reshape(grid.shape)
    h = grid.h
    g = np.where(mask, np.asarray(g, dtype=float).reshape(grid.shape), 0.0)
    if max_iter is None:
        max_iter = 50 * max(grid.cells)
    scale = beta * float(np.max(np.abs(g))) if mask.any() else 0.0
    if scale == 0.0:
        return ScalarField(grid, mask, np.zeros(grid.shape), side, interface)
    gmax = float(np.max(np.abs(g)))
    floor = 4 * np.finfo(float).eps * (beta + 4 * float(np.sum(1.0 / h**2))) * gmax
    target = max(tol * scale, floor)

    def apply(x):
        return np.where(mask, beta * x, 0.0) - masked_laplacian(x, mask, h)

    if jacobi:
        inv_diag = np.where(mask, 1.0 / (beta + _neighbour_count(mask, h)), 0.0)
    else:
        inv_diag = mask.astype(float)

    b = beta * g
    x = g.copy()
    r = b - apply(x)
    it = 0
    res = float(np.max(np.abs(r)))
    while res > target:
        # (re)start CG from the true residual
        zv = inv_diag * r
        p = zv.copy()
        rz = float(np.sum(r * zv))
        inner_done = False
        while it < max_iter:
            ap = apply(p)
            alpha = rz / float(np.sum(p * ap))
            x += alpha * p
            r -= alpha * ap
            it += 1
            if float(np.max(np.abs(r))) <= target:
                inner_done = True
                break
            zv = inv_diag * r
            rz_new = float(np.sum(r * zv))
            p = zv + (rz_new / rz) * p
            rz = rz_new
        r = b - apply(x)
        new_res = float(np.max(np.abs(r)))
        if new_res <= target:
            res = new_res
            break
        if it >= max_iter or (inner_done and new_res >= res):
            raise NonConvergenceError(
                f"CG stopped after {it} iterations with residual {new_res:.3e} > {target:.3e}", new_res
            )
        res = new_res
    log.debug("CG converged in %d iterations, residual %.3e", it, res)
    out = ScalarField(grid, mask, x, side, interface)
    for hook in SOLVE_HOOKS:
        hook(out, g, beta)
    return out


# Callables ``hook(u, g, beta)`` run after every successful solve (used by the test suite).
SOLVE_HOOKS: list = []


def solve_diagnostics(u: ScalarField, g, beta: float) -> dict:
    """Compatibility defect and maximum-principle excess of one solve.

    ``compat`` is ``|sum_cells (u - g) h^dim| / (|g|_inf |Omega_side|)``, which
    vanishes because the masked Laplacian has zero column sums; ``maxp`` is how
    far ``u`` leaves ``[min g, max g]`` on the mask.
    """
    m = u.mask
    gv = np.asarray(g, dtype=float).reshape(u.grid.shape)[m]
    uv = u.values[m]
    gmax = float(np.max(np.abs(gv))) if gv.size else 0.0
    if gmax == 0.0:
        return {"compat": 0.0, "maxp": float(np.max(np.abs(uv), initial=0.0))}
    vol = u.grid.cell_volume
    compat = abs(float(np.sum(uv - gv))) * vol / (gmax * vol * gv.size)
    maxp = max(0.0, float(np.max(uv - gv.max())), float(np.max(gv.min() - uv)))
    return {"compat": compat, "maxp": maxp}


def _side_values(grid: GridSpec, g, side: int) -> np.ndarray:
    if isinstance(g, PiecewiseField):
        if g.grid != grid:
            raise ValueError("datum and grid do not match")
        return g.side(side).filled()
    return g.values(grid.centers(), side=side)


def solve_piecewise(grid: GridSpec, g, beta: float, **kw) -> PiecewiseField:
    """Independent Neumann solves on both sides of ``g.interface``.

    ``g`` is an input datum or a piecewise field on the same grid.
    """
    interface = g.interface
    m1, m2 = grid.side_masks(interface)
    u1 = solve_screened_poisson(grid, _side_values(grid, g, 1), beta, m1, side=1, interface=interface, **kw)
    u2 = solve_screened_poisson(grid, _side_values(grid, g, 2), beta, m2, side=2, interface=interface, **kw)
    return PiecewiseField(u1, u2, interface)


def solve_whole(grid: GridSpec, g_values, beta: float, **kw) -> ScalarField:
    """Single solve on the whole domain (no crack)."""
    return solve_screened_poisson(grid, g_values, beta, None, **kw)


def datum_field(grid: GridSpec, g) -> PiecewiseField:
    """The datum sampled at cell centres, as a piecewise field."""
    if isinstance(g, PiecewiseField):
        return g
    m1, m2 = grid.side_masks(g.interface)
    x = grid.centers()
    return PiecewiseField(
        ScalarField(grid, m1, g.values(x, side=1), 1, g.interface),
        ScalarField(grid, m2, g.values(x, side=2), 2, g.interface),
        g.interface,
    )


def _diff1(u, mask, h, axis):
    """Second-order first derivative along ``axis``, one-sided at the mask boundary."""

    def shifted(a, k, fill):
        out = np.full_like(a, fill)
        src = [slice(None)] * a.ndim
        dst = [slice(None)] * a.ndim
        if k > 0:
            src[axis] = slice(k, None)
            dst[axis] = slice(None, -k)
        else:
            src[axis] = slice(None, k)
            dst[axis] = slice(-k, None)
        out[tuple(dst)] = a[tuple(src)]
        return out

    uu = np.where(mask, u, 0.0)
    up1, up2 = shifted(uu, 1, 0.0), shifted(uu, 2, 0.0)
    um1, um2 = shifted(uu, -1, 0.0), shifted(uu, -2, 0.0)
    mp1, mp2 = shifted(mask, 1, False), shifted(mask, 2, False)
    mm1, mm2 = shifted(mask, -1, False), shifted(mask, -2, False)
    central = mp1 & mm1
    forward = ~central & mp1 & mp2
    backward = ~central & ~forward & mm1 & mm2
    bad = mask & ~(central | forward | backward)
    if np.any(bad):
        raise ThinMaskError("mask is too thin for a second-order one-sided difference")
    out = np.where(central, (up1 - um1) / (2 * h), 0.0)
    out = np.where(forward, (-3 * uu + 4 * up1 - up2) / (2 * h), out)
    out = np.where(backward, (3 * uu - 4 * um1 + um2) / (2 * h), out)
    return np.where(mask, out, np.nan)


def differentiate(field: ScalarField):
    """Gradient ``(dim, *shape)`` and Hessian ``(dim, dim, *shape)`` by repeated differencing."""
    h = field.grid.h
    dim = field.grid.dim
    grad = np.stack([_diff1(field.values, field.mask, h[a], a) for a in range(dim)])
    hess = np.stack([np.stack([_diff1(grad[a], field.mask, h[b], b) for b in range(dim)]) for a in range(dim)])
    return grad, hess


def discrete_laplacian(field: ScalarField) -> np.ndarray:
    return np.where(field.mask, masked_laplacian(field.values, field.mask, field.grid.h), np.nan)


def sample(field: ScalarField, x) -> np.ndarray:
    """Interpolate a side field at points ``x`` of shape ``(n, dim)``.

    Multilinear interpolation when the surrounding cells are all in the mask,
    otherwise a local quadratic fit through nearby same-side cells (exact for
    linear fields, second-order accurate).
    """
    grid = field.grid
    x = np.asarray(x, dtype=float).reshape(-1, grid.dim)
    if field.interface is not None and field.side is not None:
        lab = field.interface.classify(x)
        wrong = (lab != 0) & (lab != field.side)
        if np.any(wrong):
            raise SideMismatchError(f"point {x[np.argmax(wrong)]} is not on side {field.side}")
    h = grid.h
    lo = grid.domain.lo
    n = np.array(grid.cells)
    s = (x - lo) / h - 0.5  # fractional cell index
    base = np.floor(s).astype(int)
    frac = s - base
    out = np.empty(x.shape[0])
    vals = field.values
    mask = field.mask
    corners = np.array(np.meshgrid(*[[0, 1]] * grid.dim, indexing="ij")).reshape(grid.dim, -1).T
    centers = grid.axes()
    for p in range(x.shape[0]):
        idx = base[p] + corners
        ok = np.all((idx >= 0) & (idx < n), axis=1).all() and all(mask[tuple(i)] for i in idx)
        if ok:
            w = np.prod(np.where(corners == 1, frac[p], 1 - frac[p]), axis=1)
            out[p] = float(sum(wi * vals[tuple(i)] for wi, i in zip(w, idx)))
            continue
        # local fit from nearby masked cells
        c = np.clip(np.round(s[p]).astype(int), 0, n - 1)
        rad = 3
        sl = tuple(slice(max(ci - rad, 0), min(ci + rad + 1, ni)) for ci, ni in zip(c, n))
        sub_mask = mask[sl]
        pts = np.stack(np.meshgrid(*[centers[a][sl[a]] for a in range(grid.dim)], indexing="ij"), axis=-1)
        pts = pts[sub_mask]
        v = vals[sl][sub_mask]
        dist = np.linalg.norm((pts - x[p]) / h, axis=1)
        need = 3 if grid.dim == 1 else 9
        if pts.shape[0] < need:
            raise ThinMaskError(f"not enough same-side cells near {x[p]}")
        order = np.argsort(dist, kind="stable")[:need]
        q = (pts[order] - x[p]) / h
        if grid.dim == 1:
            A = np.column_stack([np.ones(need), q[:, 0], q[:, 0] ** 2])
        else:
            A = np.column_stack([np.ones(need), q[:, 0], q[:, 1], q[:, 0] ** 2, q[:, 0] * q[:, 1], q[:, 1] ** 2])
        coef = np.linalg.lstsq(A, v[order], rcond=None)[0]
        out[p] = coef[0]
    return out


def neumann_trace_1d(field: ScalarField, x0: float) -> float:
    """Trace at the face ``x0`` of a 1D side field, using the zero-slope condition there.

    Quadratic through the two nearest cells with zero derivative at the face:
    ``(9 u_0 - u_1) / 8``.
    """
    xs = field.grid.axes()[0]
    idx = np.flatnonzero(field.mask)
    near = idx[np.argsort(np.abs(xs[idx] - x0), kind="stable")[:2]]
    near = near[np.argsort(np.abs(xs[near] - x0))]
    u0, u1 = field.values[near[0]], field.values[near[1]]
    return float((9 * u0 - u1) / 8)


def write_field_csv(path, field: ScalarField):
    """Row-major dump of the masked cells: coordinates then value."""
    pts = field.grid.centers()
    vals = field.values.reshape(-1)
    keep = field.mask.reshape(-1)
    names = ["x", "y"][: field.grid.dim] + ["value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for p, v in zip(pts[keep], vals[keep]):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])


def read_field_csv(path):
    """Inverse of :func:`write_field_csv`; returns ``(points, values)``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :-1], data[:, -1]


def solve_radial(g_of_rho, beta: float, radius: float, n: int):
    """Radial screened Neumann problem on a disk by a conservative finite-volume scheme.

    Solves ``beta u - (1/rho)(rho u')' = beta g`` on ``(0, radius)`` with zero
    flux at both ends.  Returns cell centres and values.  Used as an
    independent check of the Bessel closed forms.
    """
    dr = radius / n
    rho = (np.arange(n) + 0.5) * dr
    faces = np.arange(n + 1) * dr
    west = faces[:-1] / (rho * dr * dr)
    east = faces[1:] / (rho * dr * dr)
    east[-1] = 0.0
    ab = np.zeros((3, n))
    ab[1] = beta + west + east
    ab[0, 1:] = -east[:-1]
    ab[2, :-1] = -west[1:]
    u = solve_banded((1, 1), ab, beta * np.asarray(g_of_rho(rho), dtype=float))
    return rho, u
