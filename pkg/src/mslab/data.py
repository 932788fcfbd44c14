"""Input data and closed-form side solutions.

Every preset is, on each side of the interface, a constant plus a short sum
of Laplace eigenmodes (products of cosines, or a Bessel ``J0`` profile inside
a circle).  When every mode also satisfies the homogeneous Neumann condition
on the boundary of its side, the screened-Poisson solution and the heat flow
are available in closed form: each mode with eigenvalue ``kappa`` is scaled
by ``beta / (beta + kappa)`` or ``exp(-kappa t)`` respectively.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import special

from .geometry import CircleInterface, Domain, Interface, PointInterface, _as_points

J11 = float(special.jn_zeros(1, 1)[0])  # first positive zero of J1


@dataclass(frozen=True)
class CosMode:
    """``amp * prod_j cos(k_j * pi * x_j)``."""

    amp: float
    k: tuple

    @property
    def eigenvalue(self):
        return float(np.pi**2 * sum(kj * kj for kj in self.k))

    def evaluate(self, x):
        w = np.pi * np.asarray(self.k, dtype=float)
        c = np.cos(x * w)
        s = np.sin(x * w)
        val = self.amp * np.prod(c, axis=1)
        grad = np.empty_like(x)
        for j in range(x.shape[1]):
            others = np.prod(np.delete(c, j, axis=1), axis=1) if x.shape[1] > 1 else 1.0
            grad[:, j] = -self.amp * w[j] * s[:, j] * others
        return val, grad, -self.eigenvalue * val

    def neumann_on(self, coords_by_axis) -> bool:
        """Whether the normal derivative vanishes on the given axis-aligned planes."""
        for j, coords in enumerate(coords_by_axis):
            for c in coords:
                if abs(np.sin(self.k[j] * np.pi * c)) > 1e-12:
                    return False
        return True


@dataclass(frozen=True)
class BesselMode:
    """``amp * J0(kw * |x - center|)``."""

    amp: float
    center: tuple
    kw: float

    @property
    def eigenvalue(self):
        return self.kw**2

    def evaluate(self, x):
        y = x - np.asarray(self.center)
        rho = np.hypot(y[:, 0], y[:, 1])
        val = self.amp * special.j0(self.kw * rho)
        dr = -self.amp * self.kw * special.j1(self.kw * rho)
        with np.errstate(invalid="ignore", divide="ignore"):
            grad = np.where(rho[:, None] > 0, dr[:, None] * y / rho[:, None], 0.0)
        return val, grad, -self.eigenvalue * val


@dataclass(frozen=True)
class ModalFunction:
    """Constant plus a list of eigenmodes; evaluates value, gradient and Laplacian."""

    const: float
    modes: tuple = ()

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        n, dim = x.shape
        val = np.full(n, float(self.const))
        grad = np.zeros((n, dim))
        lap = np.zeros(n)
        for m in self.modes:
            v, g, l = m.evaluate(x)
            val += v
            grad += g
            lap += l
        return val, grad, lap

    def value(self, x):
        return self.evaluate(x)[0]

    def scaled(self, factor) -> "ModalFunction":
        """Scale every mode amplitude by ``factor(eigenvalue)``."""
        return ModalFunction(self.const, tuple(replace(m, amp=m.amp * factor(m.eigenvalue)) for m in self.modes))

    def screened(self, beta: float) -> "ModalFunction":
        return self.scaled(lambda kap: beta / (beta + kap))

    def heat(self, t: float) -> "ModalFunction":
        return self.scaled(lambda kap: np.exp(-kap * t))


def _side_planes(domain: Domain, interface: Optional[Interface], side: int):
    """Axis-aligned boundary planes of one side, or None if the side is not a box."""
    planes = [list(b) for b in domain.bounds]
    if interface is None:
        return planes
    if isinstance(interface, PointInterface):
        lo, hi = domain.bounds[0]
        return [[lo, interface.x0]] if side == 1 else [[interface.x0, hi]]
    return None


@dataclass
class InputDatum:
    """Piecewise datum ``g``: ``sides[0]`` on side 1, ``sides[1]`` on side 2."""

    domain: Domain
    interface: Optional[Interface]
    sides: tuple
    preset: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.domain.dim

    def side_function(self, side: int) -> ModalFunction:
        return self.sides[0] if side == 1 or self.interface is None else self.sides[1]

    def values(self, x, side=None):
        x = _as_points(x, self.dim)
        if side is not None:
            return self.side_function(side).value(x)
        if self.interface is None:
            return self.sides[0].value(x)
        lab = self.interface.classify(x)
        out = self.sides[1].value(x)
        inner = lab == 1
        if np.any(inner):
            out[inner] = self.sides[0].value(x[inner])
        return out

    def evaluate(self, x, side):
        return self.side_function(side).evaluate(_as_points(x, self.dim))

    def traces(self, n=64):
        """Side-1 and side-2 traces at sample points of the interface."""
        pts = self.interface.sample_points(n)
        return self.sides[0].value(pts), self.sides[1].value(pts)

    def jump_inf(self) -> float:
        """``inf`` over the interface of (side-1 trace minus side-2 trace)."""
        if self.interface is None:
            return 0.0
        t1, t2 = self.traces()
        return float(np.min(t1 - t2))

    def sup_norm(self, n=2001) -> float:
        """Sup of ``|g|`` estimated on a fine lattice (exact for the presets' extrema)."""
        axes = [np.linspace(lo, hi, n if self.dim == 1 else 201) for lo, hi in self.domain.bounds]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        vals = np.abs(self.values(pts))
        if self.interface is not None:
            t1, t2 = self.traces()
            vals = np.concatenate([vals, np.abs(t1), np.abs(t2)])
        return float(np.max(vals))

    def _neumann_compatible(self, side) -> bool:
        fn = self.side_function(side)
        if not fn.modes:
            return True
        planes = _side_planes(self.domain, self.interface, side)
        for m in fn.modes:
            if isinstance(m, CosMode):
                if planes is None or not m.neumann_on(planes):
                    return False
            elif isinstance(m, BesselMode):
                ok = (
                    isinstance(self.interface, CircleInterface)
                    and side == 1
                    and np.allclose(m.center, self.interface.center)
                    and abs(special.j1(m.kw * self.interface.radius)) < 1e-12
                )
                if not ok:
                    return False
            else:
                return False
        return True

    def has_exact_solution(self) -> bool:
        sides = (1, 2) if self.interface is not None else (1,)
        return all(self._neumann_compatible(s) for s in sides)

    def exact_solution(self, beta: float):
        """Closed-form side solutions of the screened problem, or None."""
        if not self.has_exact_solution():
            return None
        return tuple(s.screened(beta) for s in self.sides)

    def exact_heat(self, t: float):
        """Closed-form heat flow (Neumann on each side) started from g, or None."""
        if not self.has_exact_solution():
            return None
        return tuple(s.heat(t) for s in self.sides)

    def is_radial(self) -> bool:
        if not isinstance(self.interface, CircleInterface):
            return False
        for fn in self.sides:
            for m in fn.modes:
                if not (isinstance(m, BesselMode) and np.allclose(m.center, self.interface.center)):
                    return False
        return True


def _modes_cos(dim, amplitude, mode):
    if amplitude == 0:
        return ()
    return (CosMode(float(amplitude), tuple([int(mode)] * dim)),)


def make_input(preset: str, domain: Domain, interface: Optional[Interface] = None, **p) -> InputDatum:
    """Build one of the named presets.

    ``constant(value)``, ``cosine_mode(amplitude, mode, offset)``,
    ``jump_constant(inner, outer)``, ``jump_plus_smooth(inner, outer,
    amplitude, mode)`` and ``radial_jump(inner, outer, amplitude)``.
    """
    dim = domain.dim
    if preset == "constant":
        f = ModalFunction(float(p.get("value", 0.0)))
        sides = (f, f)
    elif preset == "cosine_mode":
        f = ModalFunction(float(p.get("offset", 0.0)), _modes_cos(dim, p.get("amplitude", 1.0), p.get("mode", 1)))
        sides = (f, f)
    elif preset in ("jump_constant", "jump_plus_smooth"):
        modes = ()
        if preset == "jump_plus_smooth":
            modes = _modes_cos(dim, p.get("amplitude", 0.0), p.get("mode", 1))
        sides = (
            ModalFunction(float(p.get("inner", 1.0)), modes),
            ModalFunction(float(p.get("outer", -1.0)), modes),
        )
    elif preset == "radial_jump":
        if not isinstance(interface, CircleInterface):
            raise ValueError("radial_jump needs a circle interface")
        kw = J11 / interface.radius
        amp = float(p.get("amplitude", 0.0))
        modes = (BesselMode(amp, tuple(interface.center), kw),) if amp else ()
        sides = (ModalFunction(float(p.get("inner", 1.0)), modes), ModalFunction(float(p.get("outer", -1.0))))
    else:
        raise ValueError(f"unknown input preset {preset!r}")
    if interface is None and preset in ("jump_constant", "jump_plus_smooth", "radial_jump"):
        raise ValueError(f"preset {preset!r} needs an interface")
    return InputDatum(domain, interface, sides, preset, dict(p))
