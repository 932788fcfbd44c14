"""Explicit calibration field for a piecewise screened-Poisson minimiser.

Given the side solutions ``u_1, u_2`` of ``(beta - Lap) u = beta g`` (Neumann
on each side of the interface), this module builds the vector field
``phi = (phi_x, phi_z)`` on ``Omega x R``:

* ``v_1, v_2`` are smooth positive weights built from the exponential
  profile ``w`` and a cutoff, with ``v_i = 1`` on the interface;
* ``u~_1, u~_2`` extend the side solutions across the interface so that
  ``u~_1 - u~_2 >= 3S/4`` everywhere (``S`` = smallest jump of the datum);
* around each graph ``z = u~_i(x)`` sits a slab of half-thickness ``h(x)``
  where ``phi_x`` is an explicit affine-in-``z`` field with a one-sided cut;
* ``phi_z`` is fixed by requiring zero divergence, with the antiderivatives
  of ``div_x phi_x`` in ``z`` evaluated in closed form (``quadrature="exact"``)
  or by Simpson's rule on finite-difference divergences (``"simpson"``).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Interface, safe_laplacian_d, safe_normal

log = logging.getLogger(__name__)

RATIO_BOUND = 1.0 - (25.0 / 32.0) / np.sqrt(3.0)


class InfeasibleParameters(ValueError):
    """A parameter inequality cannot be satisfied; the message names it."""


class ConstructionError(ValueError):
    """The construction's geometric preconditions fail (e.g. separation)."""


# -- one-dimensional profiles ----------------------------------------------------


def smoothstep(s):
    """Quintic ``0 -> 1`` on ``[0, 1]`` with vanishing first and second derivatives at both ends."""
    s = np.clip(s, 0.0, 1.0)
    val = s**3 * (10 - 15 * s + 6 * s * s)
    d1 = 30 * s * s * (1 - s) ** 2
    d2 = 60 * s * (1 - s) * (1 - 2 * s)
    return val, d1, d2


def cutoff(t, R):
    """``theta``: 1 on ``[0, R/4]``, 0 beyond ``R/2``, quintic in between."""
    q = R / 4
    s, s1, s2 = smoothstep((np.asarray(t, dtype=float) - q) / q)
    return 1.0 - s, -s1 / q, -s2 / (q * q)


def blend(t, R):
    """``b``: 1 on ``[0, R/8]``, 0 beyond ``R/4``, quintic in between."""
    q = R / 8
    s, s1, s2 = smoothstep((np.asarray(t, dtype=float) - q) / q)
    return 1.0 - s, -s1 / q, -s2 / (q * q)


def w_profile(t, lam, R):
    """Exponential profile with ``w(0) = 1/2``, ``w'(R/2) = 0`` and ``w'' = 16 lam w``.

    Written so that no exponential overflows for ``0 <= t <= R``.
    """
    t = np.asarray(t, dtype=float)
    a = 2.0 * np.sqrt(lam) * R
    q = 4.0 * np.sqrt(lam)
    e1 = np.exp(-2 * a + q * t)
    e2 = np.exp(-q * t)
    den = 1.0 + np.exp(-2 * a)
    w = 0.5 * (e1 + e2) / den
    w1 = 0.5 * q * (e1 - e2) / den
    return w, w1, q * q * w


def profile(t, lam, R):
    """``F(t) = 1/2 + theta(t) w(t)`` and its first two derivatives (``t >= 0``)."""
    th, th1, th2 = cutoff(t, R)
    w, w1, w2 = w_profile(np.minimum(t, R), lam, R)
    F = 0.5 + th * w
    F1 = th1 * w + th * w1
    F2 = th2 * w + 2 * th1 * w1 + th * w2
    return F, F1, F2


def h_tilde_of(lam, R):
    """``(1/sqrt 2) |grad v|^(-1/2)`` on the interface; constant for the supported shapes."""
    w1_0 = w_profile(0.0, lam, R)[1]
    return float(1.0 / np.sqrt(2.0 * abs(w1_0)))


# -- parameters --------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationParams:
    beta: float
    lam: float
    eps: float
    gamma: float
    gamma1: float
    D: float
    S: float
    R: float
    h_tilde: float
    slope: float  # beta^(1/2 + gamma1)
    grad_u_sup: float
    grad_ut_sup: float
    grad_v_sup: float
    lambda_rule: str = "default"
    warnings: tuple = ()

    @property
    def d_kink(self) -> float:
        """Distance from the interface where ``h`` reaches its floor ``eps``."""
        return min((self.h_tilde - self.eps) / self.slope, self.D)

    def as_dict(self):
        return {
            "beta": self.beta,
            "lambda": self.lam,
            "eps": self.eps,
            "gamma": self.gamma,
            "gamma1": self.gamma1,
            "D": self.D,
            "S": self.S,
            "R": self.R,
            "h_tilde": self.h_tilde,
            "slope": self.slope,
            "grad_u_sup": self.grad_u_sup,
            "grad_ut_sup": self.grad_ut_sup,
            "grad_v_sup": self.grad_v_sup,
            "lambda_rule": self.lambda_rule,
        }


def lambda_default(grad_u_sup, S):
    """Smallest power of two with ``sqrt(lam)/6 >= max(4 |grad u|^2, 64/S^2) + 1``."""
    need = max(4 * grad_u_sup**2, 64 / S**2) + 1
    k = 0
    while np.sqrt(2.0**k) / 6 < need:
        k += 1
    return 2.0**k


def lambda_minimal(S, R):
    """Smallest power of two whose slab half-width on the interface fits ``h~ <= S/8``."""
    k = 0
    while h_tilde_of(2.0**k, R) > S / 8:
        k += 1
    return 2.0**k


def choose_eps(grad_ut_sup, grad_v_sup, h_tilde):
    """Largest ``2^-k`` with ``6 eps |grad u~| + 4 eps^2 |grad v| <= 1/4`` and ``eps < h~``."""
    for k in range(1, 80):
        e = 2.0**-k
        if 6 * e * grad_ut_sup + 4 * e * e * grad_v_sup <= 0.25 and e < h_tilde:
            return e
    raise InfeasibleParameters("no eps = 2^-k satisfies 6 eps |grad u~| + 4 eps^2 |grad v| <= 1/4 with eps < h~")


def choose_D(lam, R, h_tilde, n=4001):
    """Largest scanned ``D <= R/2`` with ``|grad v| >= 1/2`` and ``h~^2 |grad v| / v <= RATIO_BOUND`` on ``|d| <= D``."""
    t = np.linspace(0.0, R / 2, n)
    F, F1, _ = profile(t, lam, R)
    ok = (np.abs(F1) >= 0.5) & (h_tilde**2 * np.abs(F1) / F <= RATIO_BOUND)
    if not ok[0]:
        raise InfeasibleParameters("no D > 0 satisfies |grad v| >= 1/2 and h~^2 |grad v|/v <= 1 - (25/32)/sqrt(3)")
    bad = np.flatnonzero(~ok)
    last = (bad[0] - 1) if bad.size else n - 1
    return float(t[last])


# -- extension of the side solutions ------------------------------------------------


class ExtendedPair:
    """Extensions ``u~_1, u~_2`` of the side solutions to the whole domain.

    On its own side ``u~_i = u_i``.  Across the interface it equals the
    (constant) trace of ``u_i`` within ``R/8`` of the interface and
    ``u_j +/- 3S/4`` beyond ``R/4``, blended smoothly in between.
    """

    def __init__(self, sols, interface: Interface, S: float, R: float):
        self.sols = sols
        self.interface = interface
        self.S = S
        self.R = R
        self.shift = {1: 0.75 * S, 2: -0.75 * S}

    def geometry(self, x):
        d = self.interface.signed_distance(x)
        nu = safe_normal(self.interface, x)
        lapd = safe_laplacian_d(self.interface, x)
        side = self.interface.classify(x)
        return d, nu, lapd, side

    def evaluate(self, i, x, geo=None):
        d, nu, lapd, side = self.geometry(x) if geo is None else geo
        n, dim = x.shape
        val = np.empty(n)
        grad = np.empty((n, dim))
        lap = np.empty(n)
        own = (side == i) | (side == 0)
        if np.any(own):
            val[own], grad[own], lap[own] = self.sols[i - 1].evaluate(x[own])
        other = ~own
        if np.any(other):
            j = 3 - i
            xo = x[other]
            ad = np.abs(d[other])
            sg = np.sign(d[other])
            proj = xo - d[other][:, None] * nu[other]
            T = self.sols[i - 1].evaluate(proj)[0]
            U, gU, lU = self.sols[j - 1].evaluate(xo)
            b, b1, b2 = blend(ad, self.R)
            diff = T - U - self.shift[i]
            gabs = sg[:, None] * nu[other]
            lap_abs = sg * lapd[other]
            val[other] = b * T + (1 - b) * (U + self.shift[i])
            grad[other] = (b1 * diff)[:, None] * gabs + (1 - b)[:, None] * gU
            lap[other] = (b2 + b1 * lap_abs) * diff - 2 * b1 * np.sum(gabs * gU, axis=1) + (1 - b) * lU
        return val, grad, lap


# -- the field ---------------------------------------------------------------------


@dataclass
class Columns:
    """Everything about a set of base points ``x`` that does not depend on ``z``."""

    x: np.ndarray
    d: np.ndarray
    nu: np.ndarray
    side: np.ndarray
    g: np.ndarray
    h: np.ndarray
    gh: np.ndarray
    v: dict = field(default_factory=dict)
    gv: dict = field(default_factory=dict)
    lv: dict = field(default_factory=dict)
    u: dict = field(default_factory=dict)
    gu: dict = field(default_factory=dict)
    lu: dict = field(default_factory=dict)

    def mu(self, i):
        return self.lv[i] / self.v[i]


SIGMA = {1: -1.0, 2: 1.0}


def _dot(a, b):
    return np.sum(a * b, axis=-1)


class CalibrationField:
    """The field ``phi``; evaluate it with :meth:`phi` or :meth:`phi_at`."""

    def __init__(self, params: CalibrationParams, g, sols, interface: Interface, quadrature="exact", sol_kind=""):
        if quadrature not in ("exact", "simpson"):
            raise ValueError("quadrature must be 'exact' or 'simpson'")
        self.params = params
        self.g = g
        self.sols = sols
        self.interface = interface
        self.ext = ExtendedPair(sols, interface, params.S, params.R)
        self.quadrature = quadrature
        self.sol_kind = sol_kind
        self.simpson_nodes = 257

    @property
    def dim(self):
        return self.interface.dim

    # weights and slab width
    def weights(self, d, nu, lapd):
        p = self.params
        ad = np.abs(d)
        F, F1, F2 = profile(ad, p.lam, p.R)
        inner = d <= 0
        # v_1 = F(|d|) on side 1, 2 - F(|d|) on side 2; v_2 mirrored
        v1 = np.where(inner, F, 2 - F)
        v2 = 2 - v1
        gv1 = (-F1)[:, None] * nu
        lap_in = F2 - F1 * lapd  # Laplacian of F(-d)
        lap_out = F2 + F1 * lapd  # Laplacian of F(d)
        lv1 = np.where(inner, lap_in, -lap_out)
        return {1: v1, 2: v2}, {1: gv1, 2: -gv1}, {1: lv1, 2: -lv1}

    def slab(self, d, nu):
        p = self.params
        ad = np.abs(d)
        raw = p.h_tilde - p.slope * ad
        near = ad <= p.D
        h = np.where(near, np.maximum(raw, p.eps), p.eps)
        active = near & (raw > p.eps) & (ad > self.interface.tolerance)
        gh = np.where(active[:, None], (-p.slope * np.sign(d))[:, None] * nu, 0.0)
        return h, gh

    def columns(self, x) -> Columns:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        geo = self.ext.geometry(x)
        d, nu, lapd, side = geo
        h, gh = self.slab(d, nu)
        own = np.where(side == 2, 2, 1)
        g = np.empty(x.shape[0])
        for s in (1, 2):
            m = own == s
            if np.any(m):
                g[m] = self.g.values(x[m], side=s)
        col = Columns(x, d, nu, side, g, h, gh)
        col.v, col.gv, col.lv = self.weights(d, nu, lapd)
        for i in (1, 2):
            col.u[i], col.gu[i], col.lu[i] = self.ext.evaluate(i, x, geo)
        return col

    # pieces of the construction; arrays are (n, m) in z, (n, m, dim) for vectors
    def _c(self, a):
        return a[:, None]

    def _cv(self, a):
        return a[:, None, :]

    def slab_phix(self, col: Columns, i, Z):
        """``phi_x`` from the slab-``i`` formula (no slab indicator applied)."""
        u = self._c(col.u[i])
        h = self._c(col.h)
        coef = (u - Z) / self._c(col.v[i])
        a = self._cv(col.gu[i]) - coef[..., None] * self._cv(col.gv[i])
        cut = 16.0 / h * np.maximum(SIGMA[i] * (Z - u) - h / 2, 0.0)
        return 2 * a - cut[..., None] * self._cv(col.gu[i]), a

    def _G_coeffs(self, col, i):
        s = SIGMA[i]
        gu = col.gu[i]
        hu = _dot(col.gh, gu)
        P = (-s * _dot(gu, gu) - hu / 2) / col.h
        Q = col.lu[i] / col.h - hu / col.h**2
        return P, Q

    def _G(self, col, i, Z):
        """Antiderivative ``G(s^+)`` of the cut-term divergence, in the variable ``s``."""
        P, Q = self._G_coeffs(col, i)
        sp = np.maximum(SIGMA[i] * (Z - self._c(col.u[i])) - self._c(col.h) / 2, 0.0)
        return self._c(P) * sp + self._c(Q) * sp * sp / 2

    def div_integral(self, col: Columns, j, A, B):
        """``int_A^B div_x phi_x^(j)(x, t) dt`` for the slab-``j`` formula."""
        if self.quadrature == "simpson":
            return self.div_integral_simpson(col, j, A, B)
        u = self._c(col.u[j])
        c0 = 2 * col.lu[j] - 2 * _dot(col.gu[j], col.gv[j]) / col.v[j]
        M = col.lv[j] / col.v[j] - _dot(col.gv[j], col.gv[j]) / col.v[j] ** 2
        lin = self._c(c0) * (B - A) + self._c(M) * ((B - u) ** 2 - (A - u) ** 2)
        return lin - 16 * SIGMA[j] * (self._G(col, j, B) - self._G(col, j, A))

    def psi(self, col, i, Z):
        """``int_{u~_i}^{z}`` of the cut-term contribution, so that ``d/dz phi_z = -div_x phi_x``."""
        if self.quadrature == "simpson":
            U = np.broadcast_to(self._c(col.u[i]), Z.shape)
            full = self.div_integral_simpson(col, i, U, Z)
            u = self._c(col.u[i])
            c0 = 2 * col.lu[i] - 2 * _dot(col.gu[i], col.gv[i]) / col.v[i]
            M = col.lv[i] / col.v[i] - _dot(col.gv[i], col.gv[i]) / col.v[i] ** 2
            smooth = self._c(c0) * (Z - u) + self._c(M) * (Z - u) ** 2
            return -(full - smooth)
        return 16 * SIGMA[i] * self._G(col, i, Z)

    def vertical_own(self, col, i, Z):
        """``phi_z`` inside the own slab (side ``i`` column, slab ``i``)."""
        u = self._c(col.u[i])
        _, a = self.slab_phix(col, i, Z)
        beta = self.params.beta
        return (
            _dot(a, a)
            - beta * (Z - self._c(col.g)) ** 2
            + (beta - self._c(col.mu(i))) * (u - Z) ** 2
            + self.psi(col, i, Z)
        )

    def _flux(self, col, i, Z, sign_u, sign_h):
        """``phi_x^(i)(Z) . (sign_u grad u~_i + sign_h grad h)``."""
        px, _ = self.slab_phix(col, i, Z)
        dirn = sign_u * self._cv(col.gu[i]) + sign_h * self._cv(col.gh)
        return _dot(px, dirn)

    def phi(self, x, Z):
        """Evaluate ``phi`` at base points ``x`` (n, dim) and heights ``Z`` (n, m).

        Returns ``(phi_x, phi_z, on_interface)``; on the interface ``phi_z`` is
        set to zero outside the slabs (a measure-zero convention).
        """
        col = self.columns(x)
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        return self.phi_columns(col, Z)

    def phi_columns(self, col: Columns, Z):
        n, m = Z.shape
        C = self._c
        top = {i: C(col.u[i] + col.h) for i in (1, 2)}
        bot = {i: C(col.u[i] - col.h) for i in (1, 2)}
        in1 = (Z >= bot[1]) & (Z <= top[1])
        in2 = (Z >= bot[2]) & (Z <= top[2])
        px1, _ = self.slab_phix(col, 1, Z)
        px2, _ = self.slab_phix(col, 2, Z)
        phix = np.where(in1[..., None], px1, 0.0) + np.where(in2[..., None], px2, 0.0)
        phiz = np.zeros((n, m))
        T1, B1, T2, B2 = (np.broadcast_to(a, (n, m)) for a in (top[1], bot[1], top[2], bot[2]))

        s1 = col.side == 1
        if np.any(s1):
            c = _subset(col, s1)
            t1, b1, t2, b2 = T1[s1], B1[s1], T2[s1], B2[s1]
            z = Z[s1]
            above = self.vertical_own(c, 1, t1) + self._flux(c, 1, t1, -1, -1)
            c12 = self.vertical_own(c, 1, b1) + self._flux(c, 1, b1, -1, +1)
            at_top2 = c12 + self._flux(c, 2, t2, +1, +1)
            below = at_top2 + self.div_integral(c, 2, b2, t2) + self._flux(c, 2, b2, -1, +1)
            zc = np.clip(z, b2, t2)
            mid2 = at_top2 + self.div_integral(c, 2, zc, t2)
            out = np.where(z > t1, above, c12)
            own = (z >= b1) & (z <= t1)
            out = np.where(own, self.vertical_own(c, 1, np.clip(z, b1, t1)), out)
            out = np.where((z >= b2) & (z < t2), mid2, out)
            out = np.where(z < b2, below, out)
            out = np.where((z >= t2) & (z < b1), c12, out)
            phiz[s1] = out

        s2 = col.side == 2
        if np.any(s2):
            c = _subset(col, s2)
            t1, b1, t2, b2 = T1[s2], B1[s2], T2[s2], B2[s2]
            z = Z[s2]
            below = self.vertical_own(c, 2, b2) + self._flux(c, 2, b2, -1, +1)
            c21 = self.vertical_own(c, 2, t2) + self._flux(c, 2, t2, -1, -1)
            at_bot1 = c21 + self._flux(c, 1, b1, +1, -1)
            above = at_bot1 + self.div_integral(c, 1, t1, b1) + self._flux(c, 1, t1, -1, -1)
            zc = np.clip(z, b1, t1)
            mid1 = at_bot1 + self.div_integral(c, 1, zc, b1)
            out = np.where(z < b2, below, c21)
            own = (z >= b2) & (z <= t2)
            out = np.where(own, self.vertical_own(c, 2, np.clip(z, b2, t2)), out)
            out = np.where((z > b1) & (z <= t1), mid1, out)
            out = np.where(z > t1, above, out)
            out = np.where((z > t2) & (z <= b1), c21, out)
            phiz[s2] = out

        s0 = col.side == 0
        if np.any(s0):
            c = _subset(col, s0)
            z = Z[s0]
            own1 = (z >= B1[s0]) & (z <= T1[s0])
            own2 = (z >= B2[s0]) & (z <= T2[s0])
            out = np.zeros_like(z)
            out = np.where(own1, self.vertical_own(c, 1, z), out)
            out = np.where(own2, self.vertical_own(c, 2, z), out)
            phiz[s0] = out
        return phix, phiz, s0

    def phi_at(self, x, z):
        """Single-point convenience wrapper."""
        px, pz, _ = self.phi(np.asarray(x, dtype=float).reshape(1, self.dim), np.array([[float(z)]]))
        return px[0, 0], float(pz[0, 0])

    # -- reference quadrature ------------------------------------------------------

    def fd_divergence(self, x, j, T, step=None):
        """Central-difference ``div_x`` of the slab-``j`` formula at ``(x, t)``; ``T`` is (n, m)."""
        if step is None:
            step = 1e-7 * self.params.R
        total = np.zeros(T.shape)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = step
            pp, _ = self.slab_phix(self.columns(x + e), j, T)
            pm, _ = self.slab_phix(self.columns(x - e), j, T)
            total += (pp[..., k] - pm[..., k]) / (2 * step)
        return total

    def div_integral_simpson(self, col: Columns, j, A, B):
        """Simpson's rule for ``int_A^B div_x phi_x^(j) dt``, split at the cut kink."""
        A, B = np.broadcast_arrays(np.asarray(A, dtype=float), np.asarray(B, dtype=float))
        n, m = A.shape
        kink = np.broadcast_to(self._c(col.u[j] + SIGMA[j] * col.h / 2), A.shape)
        mid = np.clip(kink, np.minimum(A, B), np.maximum(A, B))
        q = self.simpson_nodes | 1
        wts = np.ones(q)
        wts[1:-1:2] = 4
        wts[2:-1:2] = 2
        s = np.linspace(0.0, 1.0, q)
        total = np.zeros(A.shape)
        for end, (a, b) in ((-1, (A, mid)), (0, (mid, B))):
            nodes = a[..., None] + (b - a)[..., None] * s
            vals = self.fd_divergence(col.x, j, nodes.reshape(n, m * q)).reshape(n, m, q)
            # the divergence jumps at the kink and a difference stencil there sees
            # both sides; take the one-sided limit from the piece's interior
            k1, k2 = (-2, -3) if end == -1 else (1, 2)
            vals[..., end] = 2 * vals[..., k1] - vals[..., k2]
            total += (b - a) / (3 * (q - 1)) * np.sum(wts * vals, axis=-1)
        return total


def _subset(col: Columns, m) -> Columns:
    out = Columns(col.x[m], col.d[m], col.nu[m], col.side[m], col.g[m], col.h[m], col.gh[m])
    for name in ("v", "gv", "lv", "u", "gu", "lu"):
        getattr(out, name).update({i: getattr(col, name)[i][m] for i in (1, 2)})
    return out


# -- top-level constructor ------------------------------------------------------------


def _sup_lattice(interface: Interface, n1d=4001, n2d=161):
    dom = interface.domain
    if dom.dim == 1:
        lo, hi = dom.bounds[0]
        x = np.linspace(lo, hi, n1d)[:, None]
    else:
        axes = [np.linspace(lo, hi, n2d) for lo, hi in dom.bounds]
        x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
        x = x[np.linalg.norm(x - interface.center, axis=1) > 1e-9]
    return x


def calibrate(
    g,
    beta: float,
    sols=None,
    *,
    grid=None,
    lam: Optional[float] = None,
    lambda_rule: str = "default",
    eps: Optional[float] = None,
    D: Optional[float] = None,
    gamma: float = 0.2,
    gamma1: float = 0.35,
    quadrature: str = "exact",
    enforce: bool = True,
) -> CalibrationField:
    """Build the calibration field for the datum ``g`` at fidelity weight ``beta``.

    ``sols`` are evaluators of the two side solutions; by default they come
    from closed forms or, in 1D, from a splined grid solve on ``grid``.
    With ``enforce=False`` the preconditions (``beta >= 1``, closeness of
    ``u`` to ``g``, continuity of ``h``) are recorded as warnings instead of
    raising, so that a failing configuration can still be verified.
    """
    from .sides import side_solutions

    interface = g.interface
    if interface is None:
        raise ValueError("calibration needs an interface")
    if interface.variant == "circle" and not g.is_radial():
        raise NotImplementedError("2D calibration is implemented for radially symmetric data only")
    warnings = []

    def problem(msg, exc=InfeasibleParameters):
        if enforce:
            raise exc(msg)
        warnings.append(msg)
        log.warning(msg)

    if not 0 < gamma < gamma1 < 0.5:
        raise InfeasibleParameters("exponents must satisfy 0 < gamma < gamma1 < 1/2")
    if beta < 1:
        problem(f"beta = {beta} < 1 violates the precondition beta >= 1")
    S = g.jump_inf()
    if not S > 0:
        raise ValueError("the side-1 trace of g must exceed the side-2 trace everywhere on the interface")
    R = interface.reach
    sol_kind = "given"
    if sols is None:
        sols, sol_kind = side_solutions(g, beta, grid)

    lat = _sup_lattice(interface)
    lab = interface.classify(lat)
    grad_u = 0.0
    closeness = 0.0
    for s in (1, 2):
        m = lab == s
        val, gr, _ = sols[s - 1].evaluate(lat[m])
        grad_u = max(grad_u, float(np.max(np.linalg.norm(gr, axis=1))))
        closeness = max(closeness, float(np.max(np.abs(val - g.values(lat[m], side=s)))))
    if closeness > S / 16:
        problem(f"|u - g|_inf = {closeness:.4g} exceeds S/16 = {S / 16:.4g}", ConstructionError)

    if lam is None:
        if lambda_rule == "default":
            lam = lambda_default(grad_u, S)
        elif lambda_rule == "minimal":
            lam = lambda_minimal(S, R)
        else:
            raise ValueError(f"unknown lambda rule {lambda_rule!r}")
    else:
        lambda_rule = "override"
    lam = float(lam)
    ht = h_tilde_of(lam, R)
    if ht > S / 8:
        raise InfeasibleParameters(f"slab half-width h~ = {ht:.4g} exceeds S/8 = {S / 8:.4g}; increase lambda")

    ext = ExtendedPair(sols, interface, S, R)
    geo = ext.geometry(lat)
    grad_ut = 0.0
    u1 = ext.evaluate(1, lat, geo)
    u2 = ext.evaluate(2, lat, geo)
    for _, gr, _ in (u1, u2):
        grad_ut = max(grad_ut, float(np.max(np.linalg.norm(gr, axis=1))))
    gap = u1[0] - u2[0]
    k = int(np.argmin(gap))
    if gap[k] < 0.75 * S * (1 - 1e-12):
        raise ConstructionError(
            f"extensions separate by only {gap[k]:.4g} < 3S/4 = {0.75 * S:.4g} at x = {lat[k].tolist()}"
        )
    tt = np.linspace(0.0, R / 2, 20001)
    grad_v = float(np.max(np.abs(profile(tt, lam, R)[1])))

    if eps is None:
        eps = choose_eps(grad_ut, grad_v, ht)
    elif not (0 < eps < ht):
        raise InfeasibleParameters(f"eps = {eps} violates 0 < eps < h~ = {ht:.4g}")
    elif 6 * eps * grad_ut + 4 * eps**2 * grad_v > 0.25:
        raise InfeasibleParameters("eps violates 6 eps |grad u~| + 4 eps^2 |grad v| <= 1/4")
    if D is None:
        D = choose_D(lam, R, ht)
    elif not 0 < D <= R / 2:
        raise InfeasibleParameters(f"D = {D} violates 0 < D <= R/2")
    slope = beta ** (0.5 + gamma1)
    if ht - slope * D > eps:
        problem(
            f"h is discontinuous at |d| = D: h~ - beta^(1/2+gamma1) D = {ht - slope * D:.4g} > eps = {eps:.4g}"
        )
    params = CalibrationParams(
        beta=float(beta),
        lam=lam,
        eps=float(eps),
        gamma=gamma,
        gamma1=gamma1,
        D=float(D),
        S=float(S),
        R=float(R),
        h_tilde=ht,
        slope=float(slope),
        grad_u_sup=grad_u,
        grad_ut_sup=grad_ut,
        grad_v_sup=grad_v,
        lambda_rule=lambda_rule,
        warnings=tuple(warnings),
    )
    return CalibrationField(params, g, sols, interface, quadrature=quadrature, sol_kind=sol_kind)
