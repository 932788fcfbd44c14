"""Domains, interfaces and the signed-distance geometry around them.

Two interface shapes are supported: a single point ``x0`` inside an
interval (1D) and a circle inside a rectangle (2D).  Side 1 is the part of
the domain where the signed distance is negative (left of the point, inside
the circle), side 2 is where it is positive.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class GeometryError(ValueError):
    """Raised for invalid domains/interfaces or undefined geometry queries."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``prod_k (lo_k, hi_k)``."""

    bounds: tuple

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(b) not in (1, 2):
            raise GeometryError("only 1D intervals and 2D rectangles are supported")
        for lo, hi in b:
            if not hi > lo:
                raise GeometryError(f"empty axis ({lo}, {hi})")
        object.__setattr__(self, "bounds", b)

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lo(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def hi(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, x, strict=True) -> np.ndarray:
        x = np.atleast_2d(x)
        if strict:
            return np.all((x > self.lo) & (x < self.hi), axis=1)
        return np.all((x >= self.lo) & (x <= self.hi), axis=1)

    def boundary_distance(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.min(np.minimum(x - self.lo, self.hi - x), axis=1)


@dataclass(frozen=True)
class GeometryPack:
    """Geometry at a single point.

    ``proj`` and ``normal`` are ``None`` outside the tubular neighbourhood of
    width ``reach`` (where they are not guaranteed to be well defined).
    """

    d: float
    proj: Optional[np.ndarray]
    normal: Optional[np.ndarray]
    lap_d: float
    in_tube: bool


class Interface:
    """Common interface for the point and circle variants.

    Vectorised methods take points of shape ``(n, dim)``.
    """

    variant: str
    domain: Domain
    reach: float

    # -- to be provided by subclasses
    def signed_distance(self, x) -> np.ndarray:
        raise NotImplementedError

    def normal(self, x) -> np.ndarray:
        raise NotImplementedError

    def projection(self, x) -> np.ndarray:
        raise NotImplementedError

    def laplacian_d(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def measure(self) -> float:
        raise NotImplementedError

    def sample_points(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def shifted(self, delta: float) -> "Interface":
        raise NotImplementedError

    # -- shared helpers
    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def tolerance(self) -> float:
        """Distance below which a point counts as lying on the interface."""
        return 1e-12 * self.domain.diameter

    def classify(self, x) -> np.ndarray:
        """Return 1 (inner side), 2 (outer side) or 0 (on the interface)."""
        d = self.signed_distance(x)
        out = np.where(d < 0, 1, 2)
        out[np.abs(d) <= self.tolerance] = 0
        return out

    def pack(self, x) -> GeometryPack:
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        if not self.domain.contains(x, strict=False)[0]:
            raise GeometryError(f"point {x[0]} lies outside the domain")
        d = float(self.signed_distance(x)[0])
        in_tube = abs(d) <= self.reach
        proj = self.projection(x)[0] if in_tube else None
        nu = self.normal(x)[0] if in_tube else None
        return GeometryPack(d=d, proj=proj, normal=nu, lap_d=float(self.laplacian_d(x)[0]), in_tube=in_tube)


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and dim == 1:
        x = x[:, None]
    return x.reshape(-1, dim)


class PointInterface(Interface):
    """A single point ``x0`` splitting an interval."""

    variant = "point"

    def __init__(self, domain: Domain, x0: float):
        if domain.dim != 1:
            raise GeometryError("a point interface needs a 1D domain")
        lo, hi = domain.bounds[0]
        x0 = float(x0)
        if not lo < x0 < hi:
            raise GeometryError(f"interface point {x0} is not inside ({lo}, {hi})")
        self.domain = domain
        self.x0 = x0
        self.reach = min(x0 - lo, hi - x0)

    def __repr__(self):
        return f"PointInterface(x0={self.x0}, reach={self.reach})"

    def signed_distance(self, x):
        return _as_points(x, 1)[:, 0] - self.x0

    def normal(self, x):
        return np.ones((_as_points(x, 1).shape[0], 1))

    def projection(self, x):
        return np.full((_as_points(x, 1).shape[0], 1), self.x0)

    def laplacian_d(self, x):
        return np.zeros(_as_points(x, 1).shape[0])

    @property
    def measure(self):
        return 1.0

    def sample_points(self, n=1):
        return np.array([[self.x0]])

    def shifted(self, delta):
        return PointInterface(self.domain, self.x0 + delta)


class CircleInterface(Interface):
    """Circle of radius ``r`` around ``center``; side 1 is the open disk."""

    variant = "circle"

    def __init__(self, domain: Domain, center, radius: float):
        if domain.dim != 2:
            raise GeometryError("a circle interface needs a 2D domain")
        c = np.asarray(center, dtype=float).reshape(2)
        r = float(radius)
        if r <= 0:
            raise GeometryError("circle radius must be positive")
        gap = float(np.min(np.minimum(c - domain.lo, domain.hi - c))) - r
        if gap <= 0:
            raise GeometryError("circle must lie strictly inside the domain")
        self.domain = domain
        self.center = c
        self.radius = r
        self.reach = min(r, gap)
        self._degenerate = 1e-12 * domain.diameter

    def __repr__(self):
        return f"CircleInterface(center={tuple(self.center)}, radius={self.radius}, reach={self.reach})"

    def _offsets(self, x, check=True):
        y = _as_points(x, 2) - self.center
        rho = np.hypot(y[:, 0], y[:, 1])
        if check and np.any(rho <= self._degenerate):
            raise GeometryError("normal and projection are undefined at the circle centre")
        return y, rho

    def signed_distance(self, x):
        _, rho = self._offsets(x, check=False)
        return rho - self.radius

    def normal(self, x):
        y, rho = self._offsets(x)
        return y / rho[:, None]

    def projection(self, x):
        return self.center + self.radius * self.normal(x)

    def laplacian_d(self, x):
        _, rho = self._offsets(x)
        return 1.0 / rho

    @property
    def measure(self):
        return 2.0 * np.pi * self.radius

    def sample_points(self, n=64):
        a = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        return self.center + self.radius * np.column_stack([np.cos(a), np.sin(a)])

    def shifted(self, delta):
        return CircleInterface(self.domain, self.center, self.radius + delta)


def safe_normal(interface: Interface, x) -> np.ndarray:
    """Normal field that returns zeros instead of raising at a degenerate point."""
    x = _as_points(x, interface.dim)
    if interface.variant == "point":
        return interface.normal(x)
    y = x - interface.center
    rho = np.hypot(y[:, 0], y[:, 1])
    out = np.zeros_like(y)
    ok = rho > interface._degenerate
    out[ok] = y[ok] / rho[ok, None]
    return out


def safe_laplacian_d(interface: Interface, x) -> np.ndarray:
    x = _as_points(x, interface.dim)
    if interface.variant == "point":
        return np.zeros(x.shape[0])
    y = x - interface.center
    rho = np.hypot(y[:, 0], y[:, 1])
    out = np.zeros(x.shape[0])
    ok = rho > interface._degenerate
    out[ok] = 1.0 / rho[ok]
    return out


def make_interface(domain: Domain, variant: str, **params) -> Interface:
    if variant == "point":
        return PointInterface(domain, params["x0"])
    if variant == "circle":
        return CircleInterface(domain, params["center"], params["radius"])
    raise GeometryError(f"unknown interface variant {variant!r}")


def geometry_pack(x, interface: Interface) -> GeometryPack:
    return interface.pack(x)


def classify(x, interface: Interface) -> np.ndarray:
    return interface.classify(x)
