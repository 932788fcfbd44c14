"""Numerical checks of the calibration conditions, beta scans and scaling fits.

Conditions checked on a calibration field ``phi = (phi_x, phi_z)``:

``a_b_divergence``
    zero distributional divergence, via box fluxes; smooth boxes use the
    one-point midpoint rule per face and must show second-order decay,
    boxes straddling a slab surface use face quadrature split at the
    discontinuities and must give zero net flux.
``c_inequality``
    ``phi_z + beta (z - g)^2 - |phi_x|^2 / 4 >= 0``, strictly off the band
    ``|z - u| < h/2``.
``d_graph``
    ``phi = (2 grad u, |grad u|^2 - beta (u - g)^2)`` on the graph of ``u``.
``e_jump``
    ``int_{u_2}^{u_1} phi_x dz = -nu`` on the interface.
``f_pair_sup``
    ``|int_s^t phi_x dz| <= 1`` for all ``s, t``; at most 1/2 where ``|d| > D``.
``g_boundary``
    ``phi_x . n = 0`` on the boundary of the domain.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .calibration import SIGMA, CalibrationField, Columns, _subset

log = logging.getLogger(__name__)

CONDITIONS = ("a_b_divergence", "c_inequality", "d_graph", "e_jump", "f_pair_sup", "g_boundary")
GAUSS2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


@dataclass
class ConditionReport:
    condition: str
    tolerance: float
    worst_residual: float
    worst_location: tuple
    passed: bool
    margin_stats: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)


@dataclass
class CalibrationReport:
    conditions: dict
    parameters: dict
    sample_counts: dict
    margins: np.ndarray | None = None  # rows (x..., z, margin)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.conditions.values())

    def failed(self):
        return [k for k, r in self.conditions.items() if not r.passed]


# -- sampling -------------------------------------------------------------------------


def sample_points(cal: CalibrationField, n_x: int = 401):
    """Base points: a uniform lattice plus targeted points near the interface.

    The targeted points sit inside the thin shell where the slab width
    decreases linearly, around the end of that shell, around ``D`` and in
    the blending zone of the extensions.
    """
    p = cal.params
    I = cal.interface
    dom = I.domain
    tau = I.tolerance
    offsets = np.concatenate(
        [
            p.d_kink * np.array([0.02, 0.1, 0.25, 0.5, 0.75, 0.9, 0.98, 1.02, 1.1, 1.5]),
            p.D * np.array([0.5, 0.98, 1.02]),
            p.R * np.array([0.1, 0.15, 0.2, 0.3, 0.45]),
        ]
    )
    if dom.dim == 1:
        lo, hi = dom.bounds[0]
        x = (lo + (np.arange(n_x) + 0.5) * (hi - lo) / n_x)
        extra = np.concatenate([I.x0 - offsets, I.x0 + offsets])
        x = np.concatenate([x, extra[(extra > lo) & (extra < hi)]])
        x = x[np.abs(x - I.x0) > 10 * tau][:, None]
    else:
        m = int(round(math.sqrt(n_x)))
        axes = [lo + (np.arange(m) + 0.5) * (hi - lo) / m for lo, hi in dom.bounds]
        x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
        ang = 2 * np.pi * (np.arange(8) + 0.125) / 8
        dirs = np.column_stack([np.cos(ang), np.sin(ang)])
        radii = np.concatenate([I.radius - offsets, I.radius + offsets])
        radii = radii[radii > 0]
        ring = (I.center + radii[:, None, None] * dirs[None]).reshape(-1, 2)
        x = np.concatenate([x, ring[dom.contains(ring)]])
        d = I.signed_distance(x)
        x = x[(np.abs(d) > 10 * tau) & (np.linalg.norm(x - I.center, axis=1) > 1e-9)]
    return x


def z_window(cal: CalibrationField, col: Columns, pad=0.25):
    lo = float(np.min(col.u[2] - col.h))
    hi = float(np.max(col.u[1] + col.h))
    span = hi - lo
    return lo - pad * span, hi + pad * span


def breakpoints(col: Columns):
    """Per-column z values where ``phi`` is not smooth: slab edges and cut kinks."""
    return np.column_stack(
        [
            col.u[2] - col.h,
            col.u[2] + col.h / 2,
            col.u[2] + col.h,
            col.u[1] - col.h,
            col.u[1] - col.h / 2,
            col.u[1] + col.h,
        ]
    )


def _chunks(n, workers, size=64):
    bounds = list(range(0, n, size)) + [n]
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


# -- (c) and (d) ----------------------------------------------------------------------


def margin_lattice(cal: CalibrationField, x, n_z=257, workers=1):
    """Margins ``phi_z + beta (z-g)^2 - |phi_x|^2/4`` on a lattice; returns ``(Z, margin, band)``.

    ``band`` flags nodes with ``|z - u| < h/2``.  Every column gets the
    uniform nodes plus nodes just inside and outside each slab edge and cut
    kink.
    """
    col_all = cal.columns(x)
    zlo, zhi = z_window(cal, col_all)
    base = np.linspace(zlo, zhi, n_z)
    beta = cal.params.beta

    def work(ab):
        a, b = ab
        col = _subset(col_all, slice(a, b))
        bp = breakpoints(col)
        delta = 1e-9 * (1.0 + np.abs(bp))
        Z = np.concatenate([np.broadcast_to(base, (b - a, n_z)), bp - delta, bp + delta], axis=1)
        Z = np.sort(Z, axis=1)
        px, pz, _ = cal.phi_columns(col, Z)
        marg = pz + beta * (Z - col.g[:, None]) ** 2 - 0.25 * np.sum(px * px, axis=-1)
        own = np.where(col.side == 2, col.u[2], col.u[1])
        band = np.abs(Z - own[:, None]) < col.h[:, None] / 2
        return Z, marg, band

    parts = _map(work, _chunks(x.shape[0], workers), workers)
    return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
            np.concatenate([p[2] for p in parts]))


def check_c(cal, x, n_z=257, workers=1, tol=None):
    Z, marg, band = margin_lattice(cal, x, n_z, workers)
    scale = 1.0 + cal.params.beta * float(np.max(Z) - np.min(Z)) ** 2
    if tol is None:
        tol = 1e-12 * scale
    off = np.where(band, np.inf, marg)
    k_off = np.unravel_index(np.argmin(off), off.shape)
    k_all = np.unravel_index(np.argmin(marg), marg.shape)
    min_off = float(off[k_off])
    min_all = float(marg[k_all])
    passed = min_off > 0 and min_all >= -tol
    k = k_off if min_off <= min_all + tol else k_all
    worst = max(-min_off, -min_all - tol, 0.0) if not passed else 0.0
    rows = np.column_stack([np.repeat(x, Z.shape[1], axis=0), Z.reshape(-1), marg.reshape(-1)])
    rep = ConditionReport(
        "c_inequality",
        tol,
        worst,
        (tuple(float(c) for c in x[k[0]]), float(Z[k])),
        passed,
        {"min": min_all, "mean": float(np.mean(marg)), "min_off_band": min_off},
        {"n_samples": int(marg.size), "band": "|z - u| < h/2"},
    )
    return rep, rows


def check_d(cal, x, tol=1e-12):
    col = cal.columns(x)
    own = np.where(col.side == 2, 2, 1)
    u = np.where(own == 1, col.u[1], col.u[2])
    gu = np.where((own == 1)[:, None], col.gu[1], col.gu[2])
    px, pz, _ = cal.phi_columns(col, u[:, None])
    ref_z = np.sum(gu * gu, axis=1) - cal.params.beta * (u - col.g) ** 2
    rx = np.max(np.abs(px[:, 0, :] - 2 * gu), axis=1) / (1 + 2 * np.linalg.norm(gu, axis=1))
    rz = np.abs(pz[:, 0] - ref_z) / (1 + np.abs(ref_z))
    res = np.maximum(rx, rz)
    k = int(np.argmax(res))
    return ConditionReport(
        "d_graph", tol, float(res[k]), (tuple(float(c) for c in x[k]), float(u[k])), bool(res[k] <= tol),
        {"min": float(np.min(res)), "mean": float(np.mean(res))},
    )


# -- (e) and (f) ----------------------------------------------------------------------


def _piecewise_affine(cal, col, nodes):
    """Sample ``phi_x`` at two Gauss points per interval between sorted ``nodes`` (n, k).

    Returns the affine representation ``phi(z) = alpha + slope (z - z_left)``
    of every interval, shapes ``(n, k-1, dim)``.
    """
    za, zb = nodes[:, :-1], nodes[:, 1:]
    mid, half = (za + zb) / 2, (zb - za) / 2
    q0 = mid + GAUSS2[0] * half
    q1 = mid + GAUSS2[1] * half
    k = za.shape[1]
    px, _, _ = cal.phi_columns(col, np.concatenate([q0, q1], axis=1))
    f0, f1 = px[:, :k], px[:, k:]
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = np.where(half[..., None] > 0, (f1 - f0) / (q1 - q0)[..., None], 0.0)
    alpha = f0 - slope * (q0 - za)[..., None]
    return alpha, slope


def jump_integral_e(cal: CalibrationField, x, n_quad: int = 65):
    """Composite Simpson integral of ``phi_x`` over ``[u~_2, u~_1]`` at interface points.

    The range is split at the slab edges and cut kinks, where ``phi_x`` is
    discontinuous or kinked; on each piece the integrand is smooth.
    """
    x = np.asarray(x, dtype=float).reshape(-1, cal.dim)
    col = cal.columns(x)
    lo, hi = col.u[2], col.u[1]
    bp = np.clip(breakpoints(col), lo[:, None], hi[:, None])
    edges = np.sort(np.column_stack([lo, bp, hi]), axis=1)
    q = n_quad | 1
    w = np.ones(q)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    s = np.linspace(0.0, 1.0, q)
    total = np.zeros((x.shape[0], cal.dim))
    for j in range(edges.shape[1] - 1):
        a, b = edges[:, j], edges[:, j + 1]
        # stay strictly inside the piece so one-sided values are used
        shrink = 1e-13 * (1 + np.abs(b - a))
        nodes = (a + shrink)[:, None] + ((b - a - 2 * shrink)[:, None]) * s
        px, _, _ = cal.phi_columns(col, nodes)
        total += ((b - a) / (3 * (q - 1)))[:, None] * np.einsum("q,nqd->nd", w, px)
    return total


def star_value(cal: CalibrationField, x):
    """``h^2 (grad v_2 / v_2 - grad v_1 / v_1)`` on the interface (expected ``-nu``)."""
    col = cal.columns(np.asarray(x, dtype=float).reshape(-1, cal.dim))
    h2 = (col.h**2)[:, None]
    return h2 * (col.gv[2] / col.v[2][:, None] - col.gv[1] / col.v[1][:, None])


def check_e(cal, tol):
    pts = cal.interface.sample_points(1 if cal.dim == 1 else 64)
    val = jump_integral_e(cal, pts)
    nu = cal.interface.normal(pts)
    res = np.linalg.norm(val + nu, axis=1)
    k = int(np.argmax(res))
    col = cal.columns(pts[k : k + 1])
    return ConditionReport(
        "e_jump", tol, float(res[k]), (tuple(float(c) for c in pts[k]), float(col.u[2][0])), bool(res[k] <= tol),
        {"min": float(np.min(res)), "mean": float(np.mean(res))},
        {"star_residual": float(np.max(np.linalg.norm(star_value(cal, pts) + nu, axis=1)))},
    )


def pair_sup_f(cal: CalibrationField, x, n_nodes: int = 257, window=None):
    """``max_{s,t} |int_s^t phi_x dz|`` per base point, by exact integration of the piecewise-affine field."""
    x = np.asarray(x, dtype=float).reshape(-1, cal.dim)
    col = cal.columns(x)
    if window is None:
        window = z_window(cal, col)
    base = np.linspace(window[0], window[1], n_nodes)
    bp = breakpoints(col)
    nodes = np.sort(np.concatenate([np.broadcast_to(base, (x.shape[0], n_nodes)), bp, col.u[1][:, None],
                                    col.u[2][:, None]], axis=1), axis=1)
    alpha, slope = _piecewise_affine(cal, col, nodes)
    dz = np.diff(nodes, axis=1)[..., None]
    inc = alpha * dz + 0.5 * slope * dz * dz
    Phi = np.concatenate([np.zeros((x.shape[0], 1, cal.dim)), np.cumsum(inc, axis=1)], axis=1)
    if cal.dim == 1:
        val = Phi[..., 0]
        # interior extrema where phi_x changes sign inside a piece
        with np.errstate(invalid="ignore", divide="ignore"):
            root = -alpha[..., 0] / slope[..., 0]
        ok = (slope[..., 0] != 0) & (root > 0) & (root < dz[..., 0])
        root = np.where(ok, root, 0.0)
        at_root = Phi[:, :-1, 0] + alpha[..., 0] * root + 0.5 * slope[..., 0] * root**2
        at_root = np.where(ok, at_root, Phi[:, :-1, 0])
        hi = np.maximum(val.max(axis=1), at_root.max(axis=1))
        lo = np.minimum(val.min(axis=1), at_root.min(axis=1))
        return hi - lo
    nu = col.nu
    along = np.einsum("nkd,nd->nk", Phi, nu)
    perp = Phi - along[..., None] * nu[:, None, :]
    a_al = np.einsum("nkd,nd->nk", alpha, nu)
    s_al = np.einsum("nkd,nd->nk", slope, nu)
    with np.errstate(invalid="ignore", divide="ignore"):
        root = -a_al / s_al
    ok = (s_al != 0) & (root > 0) & (root < dz[..., 0])
    root = np.where(ok, root, 0.0)
    at_root = np.where(ok, along[:, :-1] + a_al * root + 0.5 * s_al * root**2, along[:, :-1])
    r_al = np.maximum(along.max(1), at_root.max(1)) - np.minimum(along.min(1), at_root.min(1))
    r_perp = np.max(np.linalg.norm(perp, axis=2), axis=1) * 2
    return np.sqrt(r_al**2 + r_perp**2)


def check_f(cal, x, n_nodes=257, tol=1e-9):
    pts = np.concatenate([x, cal.interface.sample_points(1 if cal.dim == 1 else 16)])
    sup = pair_sup_f(cal, pts, n_nodes)
    d = np.abs(cal.interface.signed_distance(pts))
    plateau = d > cal.params.D
    over = np.maximum(sup - (1 + tol), 0.0)
    over_p = np.where(plateau, np.maximum(sup - (0.5 + tol), 0.0), 0.0)
    res = np.maximum(over, over_p)
    k = int(np.argmax(sup))
    plateau_max = float(np.max(sup[plateau])) if np.any(plateau) else float("nan")
    passed = bool(np.all(res == 0))
    return ConditionReport(
        "f_pair_sup", 1 + tol, float(np.max(sup)), (tuple(float(c) for c in pts[k]), float("nan")), passed,
        {"min": float(np.min(sup)), "mean": float(np.mean(sup))},
        {"plateau_max": plateau_max, "plateau_bound": 0.5},
    )


# -- (g) --------------------------------------------------------------------------------


def boundary_samples(cal: CalibrationField, n=64):
    dom = cal.interface.domain
    if dom.dim == 1:
        lo, hi = dom.bounds[0]
        return np.array([[lo], [hi]]), np.array([[-1.0], [1.0]])
    (x0, x1), (y0, y1) = dom.bounds
    t = (np.arange(n) + 0.5) / n
    xs = x0 + t * (x1 - x0)
    ys = y0 + t * (y1 - y0)
    pts = np.concatenate([
        np.column_stack([xs, np.full(n, y0)]), np.column_stack([xs, np.full(n, y1)]),
        np.column_stack([np.full(n, x0), ys]), np.column_stack([np.full(n, x1), ys]),
    ])
    nrm = np.concatenate([
        np.tile([0.0, -1.0], (n, 1)), np.tile([0.0, 1.0], (n, 1)),
        np.tile([-1.0, 0.0], (n, 1)), np.tile([1.0, 0.0], (n, 1)),
    ])
    return pts, nrm


def check_g(cal, n_z=257, tol=1e-10):
    pts, nrm = boundary_samples(cal)
    col = cal.columns(pts)
    zlo, zhi = z_window(cal, col)
    Z = np.broadcast_to(np.linspace(zlo, zhi, n_z), (pts.shape[0], n_z))
    px, _, _ = cal.phi_columns(col, Z)
    flux = np.abs(np.einsum("nkd,nd->nk", px, nrm))
    k = np.unravel_index(np.argmax(flux), flux.shape)
    return ConditionReport(
        "g_boundary", tol, float(flux[k]), (tuple(float(c) for c in pts[k[0]]), float(Z[k])), bool(flux[k] <= tol),
        {"min": float(np.min(flux)), "mean": float(np.mean(flux))},
    )


# -- (a)+(b): box fluxes ----------------------------------------------------------------


def _phi_points(cal, X, Z):
    """``phi`` at individual points ``(X[k], Z[k])``."""
    px, pz, _ = cal.phi(X, np.asarray(Z, dtype=float)[:, None])
    return px[:, 0, :], pz[:, 0]


def divergence_flux(cal: CalibrationField, box_center, box_half: float, rule: str = "midpoint"):
    """Net outward flux of ``phi`` through a box in ``Omega x R``, divided by the box volume.

    ``box_center`` is ``(x, z)``.  ``rule="midpoint"`` uses one midpoint per
    face.  ``rule="split"`` integrates every face with Gauss-Legendre
    quadrature split at the discontinuities of ``phi``; it is implemented
    for 1D base domains and for radially symmetric 2D fields (through the
    reduction to ``(rho, z)`` with weight ``rho``).
    """
    x, z = box_center
    x = np.asarray(x, dtype=float).reshape(cal.dim)
    b = float(box_half)
    I = cal.interface
    # the box must not meet the interface
    if cal.dim == 1:
        if abs(x[0] - I.x0) <= b:
            raise ValueError("box crosses the interface")
    else:
        corners = x + b * np.array([[sx, sy] for sx in (-1, 1) for sy in (-1, 1)])
        dd = I.signed_distance(np.concatenate([corners, x[None]]))
        rho = np.linalg.norm(x - I.center)
        if np.any(np.sign(dd) != np.sign(dd[-1])) or abs(rho - I.radius) <= b * math.sqrt(2):
            raise ValueError("box crosses the interface")
    if rule == "midpoint":
        total = 0.0
        for k in range(cal.dim):
            e = np.zeros(cal.dim)
            e[k] = b
            px, _ = _phi_points(cal, np.stack([x + e, x - e]), [z, z])
            total += (px[0, k] - px[1, k]) / (2 * b)
        _, pz = _phi_points(cal, np.stack([x, x]), [z + b, z - b])
        total += (pz[0] - pz[1]) / (2 * b)
        return float(total)
    if rule == "split":
        if cal.dim == 1:
            return _split_flux_line(cal, np.zeros(1), np.array([1.0]), np.ones_like, x[0], I.x0, z, b)
        rho = np.linalg.norm(x - I.center)
        e = (x - I.center) / rho
        return _split_flux_line(cal, I.center, e, lambda t: t, rho, I.radius, z, b)
    raise ValueError(f"unknown rule {rule!r}")


def _x_kinks(cal):
    p = cal.params
    return np.array([p.d_kink, p.D])


def _split_flux_line(cal, origin, e, weight, t_c, t_gamma, z, b):
    """Flux through a square in the ``(t, z)`` plane, ``x = origin + t e``, with weight ``w(t)``.

    ``t_gamma`` is the parameter where the line meets the interface.
    """

    def X(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return origin + t[:, None] * e

    def vertical_face(t):
        col = cal.columns(X(t))
        bp = breakpoints(col)[0]
        cuts = np.sort(np.concatenate([[z - b, z + b], bp[(bp > z - b) & (bp < z + b)]]))
        tot = 0.0
        for a, c in zip(cuts[:-1], cuts[1:]):
            zz = (a + c) / 2 + (c - a) / 2 * GL_NODES
            px, _, _ = cal.phi_columns(col, zz[None, :])
            tot += (c - a) / 2 * float(np.sum(GL_WEIGHTS * (px[0, :, :] @ e)))
        return tot * float(weight(np.array([t]))[0])

    def horizontal_face(zf):
        ts = np.linspace(t_c - b, t_c + b, 129)
        col = cal.columns(X(ts))
        f = breakpoints(col) - zf
        cuts = [t_c - b, t_c + b]
        for j in range(f.shape[1]):
            sgn = np.sign(f[:, j])
            for k in np.flatnonzero(sgn[:-1] * sgn[1:] < 0):
                def fun(t, j=j):
                    return float(breakpoints(cal.columns(X(t)))[0, j] - zf)
                cuts.append(optimize.brentq(fun, ts[k], ts[k + 1], xtol=1e-15, rtol=1e-15))
        for kink in _x_kinks(cal):
            for cand in (t_gamma - kink, t_gamma + kink):
                if t_c - b < cand < t_c + b:
                    cuts.append(cand)
        cuts = np.unique(np.array(cuts))
        tot = 0.0
        for a, c in zip(cuts[:-1], cuts[1:]):
            tt = (a + c) / 2 + (c - a) / 2 * GL_NODES
            _, pz, _ = cal.phi(X(tt), np.full((tt.size, 1), zf))
            tot += (c - a) / 2 * float(np.sum(GL_WEIGHTS * pz[:, 0] * weight(tt)))
        return tot

    flux = vertical_face(t_c + b) - vertical_face(t_c - b) + horizontal_face(z + b) - horizontal_face(z - b)
    return flux / ((2 * b) ** 2 * float(weight(np.array([t_c]))[0]))


def _box_is_smooth(cal, x, z, b):
    """True when no slab edge, cut kink, or slab-width kink meets the box."""
    I = cal.interface
    p = cal.params
    if cal.dim == 1:
        xs = x[0] + np.linspace(-b, b, 17)[:, None]
    else:
        g1 = np.linspace(-b, b, 9)
        xs = (x + np.stack(np.meshgrid(g1, g1, indexing="ij"), -1).reshape(-1, 2))
    col = cal.columns(xs)
    bp = breakpoints(col)
    if np.any((bp.max(axis=0) >= z - b) & (bp.min(axis=0) <= z + b)):
        return False
    d = np.abs(I.signed_distance(xs))
    for kink in (p.d_kink, p.D):
        if d.min() <= kink <= d.max():
            return False
    return True


def box_lattice(cal: CalibrationField):
    """Box centres and starting half-widths; each entry is ``(x, z, half, kind)``."""
    p = cal.params
    I = cal.interface
    dom = I.domain
    dists = [p.d_kink / 2, 0.75 * p.R / 8, 3 * p.R / 16]
    if p.D > p.d_kink:
        dists.append((p.d_kink + p.D) / 2)
    dists.append(min(0.6 * p.R, 0.9 * p.R))
    boxes = []
    for s in (-1, 1):
        for dist in dists:
            if cal.dim == 1:
                x = np.array([I.x0 + s * dist])
                room = min(abs(x[0] - dom.bounds[0][0]), abs(dom.bounds[0][1] - x[0]))
            else:
                x = I.center + (I.radius + s * dist) * np.array([1.0, 0.0])
                room = float(dom.boundary_distance(x[None])[0])
            if room <= 0:
                continue
            kinks = np.array([0.0, p.d_kink, p.D])
            gap = float(np.min(np.abs(kinks - dist)))
            xgap = min(gap, room)
            col = cal.columns(x[None])
            h = float(col.h[0])
            for i in (1, 2):
                u = float(col.u[i][0])
                sg = SIGMA[i]
                # smooth boxes inside the slab: on the uncut side of the graph and inside the cut zone
                boxes.append((x, u - sg * h / 4, min(h / 8, xgap / 4), "smooth"))
                boxes.append((x, u + sg * 3 * h / 4, min(h / 8, xgap / 4), "smooth"))
                # straddling the slab edges and the cut kink
                for zc in (u + h, u - h, u + SIGMA[i] * h / 2):
                    boxes.append((x, zc, min(h / 8, xgap / 4), "straddle"))
            mid = 0.5 * (float(col.u[1][0]) + float(col.u[2][0]))
            boxes.append((x, mid, min(h, xgap / 4), "smooth"))
    return boxes


def check_ab(cal: CalibrationField, tol=1e-8, order_min=1.8):
    rows = []
    worst_straddle = 0.0
    worst_loc = (tuple(), float("nan"))
    min_order = float("inf")
    scale = 1.0 + cal.params.beta
    for x, z, b0, kind in box_lattice(cal):
        halves = [b0, b0 / 2, b0 / 4]
        if kind == "smooth" and _box_is_smooth(cal, x, z, b0):
            vals = [abs(divergence_flux(cal, (x, z), b, "midpoint")) for b in halves]
            # roundoff floor of a centred difference of values of size M
            # (phi_z is a sum of terms as large as beta (z - g)^2 that cancel)
            col = cal.columns(x[None])
            px, pz, _ = cal.phi_columns(col, np.array([[z - b0, z, z + b0]]))
            M = 1.0 + max(float(np.max(np.abs(px))), float(np.max(np.abs(pz))))
            M += cal.params.beta * (abs(z - float(col.g[0])) + float(col.h[0])) ** 2
            floor = 1e-13 * M / halves[-1]
            if vals[-1] <= floor or vals[-2] <= floor:
                order = float("inf")
            else:
                order = math.log2(vals[-2] / vals[-1])
            min_order = min(min_order, order)
            rows.append((kind, x.tolist(), z, vals, order))
        else:
            # raw flux per unit face length: zero up to quadrature error if normal flux matches
            vals = [abs(divergence_flux(cal, (x, z), b, "split")) * b for b in halves]
            r = max(vals) / scale
            if r > worst_straddle:
                worst_straddle = r
                worst_loc = (tuple(float(c) for c in x), float(z))
            rows.append(("straddle", x.tolist(), z, vals, float("nan")))
    passed = worst_straddle <= tol and min_order >= order_min
    return ConditionReport(
        "a_b_divergence", tol, worst_straddle, worst_loc, bool(passed),
        {"min": worst_straddle, "mean": worst_straddle},
        {"min_order": min_order, "order_threshold": order_min, "n_boxes": len(rows), "boxes": rows},
    )


# -- driver -----------------------------------------------------------------------------


def verify_all(cal: CalibrationField, n_x: int = 401, n_z: int = 257, workers: int = 1,
               e_tol=None, f_tol=1e-9) -> CalibrationReport:
    """Run all condition checks; failures are reported, never raised."""
    if e_tol is None:
        e_tol = 1e-8 if cal.dim == 1 else 1e-6
    x = sample_points(cal, n_x)
    c_rep, rows = check_c(cal, x, n_z, workers)
    reports = {
        "a_b_divergence": check_ab(cal),
        "c_inequality": c_rep,
        "d_graph": check_d(cal, x),
        "e_jump": check_e(cal, e_tol),
        "f_pair_sup": check_f(cal, x, n_z, f_tol),
        "g_boundary": check_g(cal, n_z),
    }
    counts = {"x_samples": int(x.shape[0]), "c_samples": int(rows.shape[0]),
              "boxes": reports["a_b_divergence"].details["n_boxes"]}
    params = cal.params.as_dict()
    params["warnings"] = list(cal.params.warnings)
    return CalibrationReport(reports, params, counts, rows)


# -- beta scans ---------------------------------------------------------------------------


@dataclass
class ThresholdResult:
    beta_threshold: float  # +inf when no tested beta passes
    crossover: float
    history: list
    diagnostics: str = ""


def energy_gap(problem_at, beta):
    """``F(crack_free) - F(u_beta)`` for the problem built by ``problem_at(beta)``."""
    from .functional import make_competitor

    pb = problem_at(beta)
    return pb.energy(make_competitor("crack_free", pb)).total - pb.energy(pb.u_beta).total


def energy_crossover(problem_at, beta_range=(1e-3, 1e3)):
    """The beta where the cracked minimiser and the crack-free one have equal energy."""
    f = lambda lb: energy_gap(problem_at, math.exp(lb))
    lo, hi = math.log(beta_range[0]), math.log(beta_range[1])
    if f(lo) * f(hi) > 0:
        return float("nan")
    return float(math.exp(optimize.brentq(f, lo, hi, xtol=1e-10)))


def scan_beta_threshold(g, beta_range, problem_at=None, calibrate_kw=None, n_x=201, n_z=129, iters=10):
    """Bisection in ``log beta`` for the smallest beta whose calibration verifies.

    Assumes the verdict is monotone in beta.  Also returns the energy
    crossover for context (requires ``problem_at``).
    """
    from .calibration import InfeasibleParameters, ConstructionError, calibrate

    lo, hi = float(beta_range[0]), float(beta_range[1])
    if not hi >= 100 * lo:
        raise ValueError("beta range must span at least two decades")
    kw = dict(calibrate_kw or {})
    history = []

    def passes(beta):
        try:
            cal = calibrate(g, beta, **kw)
        except (InfeasibleParameters, ConstructionError) as exc:
            history.append((beta, False, f"infeasible: {exc}"))
            return False
        rep = verify_all(cal, n_x=n_x, n_z=n_z)
        history.append((beta, rep.passed, ",".join(rep.failed())))
        return rep.passed

    cross = energy_crossover(problem_at) if problem_at is not None else float("nan")
    if not passes(hi):
        return ThresholdResult(float("inf"), cross, history, f"no passing beta up to {hi:g}")
    if passes(lo):
        return ThresholdResult(lo, cross, history, "lower end of the range already passes")
    a, b = math.log(lo), math.log(hi)
    for _ in range(iters):
        m = 0.5 * (a + b)
        if passes(math.exp(m)):
            b = m
        else:
            a = m
    return ThresholdResult(math.exp(b), cross, history, f"bracket [{math.exp(a):.6g}, {math.exp(b):.6g}]")


# -- scaling laws ---------------------------------------------------------------------------


@dataclass
class ScalingReport:
    betas: np.ndarray
    sup_err: np.ndarray
    l2_err: np.ndarray
    grad_sup: np.ndarray
    hess_sup: np.ndarray
    slopes: dict
    residuals: dict

    def rows(self):
        return [[b, s, l, g, h] for b, s, l, g, h in
                zip(self.betas, self.sup_err, self.l2_err, self.grad_sup, self.hess_sup)]


def _fit(betas, vals):
    x = np.log(betas)
    y = np.log(np.maximum(vals, 1e-300))
    coef = np.polyfit(x, y, 1)
    res = y - np.polyval(coef, x)
    return float(coef[0]), float(np.sqrt(np.mean(res**2)))


def scaling_study(g, betas, grid, **solver_kw) -> ScalingReport:
    """Solve for each beta and fit log-log slopes of the error and derivative norms.

    The Hessian is measured on cells within the reach of the interface.
    """
    from .fields import differentiate, solve_piecewise

    betas = np.asarray(betas, dtype=float)
    if betas.size < 4 or np.any(np.diff(betas) <= 0):
        raise ValueError("the beta grid must be strictly increasing with at least four points")
    gcell = g.values(grid.centers()).reshape(grid.shape)
    dist = np.abs(g.interface.signed_distance(grid.centers())).reshape(grid.shape)
    near = dist <= g.interface.reach
    vol = grid.cell_volume
    out = {k: [] for k in ("sup", "l2", "grad", "hess")}
    for beta in betas:
        u = solve_piecewise(grid, g, beta, **solver_kw)
        diff = u.combined() - gcell
        out["sup"].append(float(np.max(np.abs(diff))))
        out["l2"].append(float(np.sqrt(np.sum(diff * diff) * vol)))
        gs, hs = 0.0, 0.0
        for side in (u.inner, u.outer):
            gr, he = differentiate(side)
            gnorm = np.sqrt(np.sum(gr**2, axis=0))
            hnorm = np.sqrt(np.sum(he**2, axis=(0, 1)))
            gs = max(gs, float(np.nanmax(gnorm)))
            hs = max(hs, float(np.nanmax(np.where(near & side.mask, hnorm, np.nan))))
        out["grad"].append(gs)
        out["hess"].append(hs)
    arrs = {k: np.array(v) for k, v in out.items()}
    slopes, resid = {}, {}
    for k in arrs:
        slopes[k], resid[k] = _fit(betas, arrs[k])
    return ScalingReport(betas, arrs["sup"], arrs["l2"], arrs["grad"], arrs["hess"], slopes, resid)
