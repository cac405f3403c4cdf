"""Benchmark problems: exterior point sources with exact data, interior sources with PML."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exact import (
    FOUR_SOURCES,
    ONE_SOURCE,
    exact_point_source,
    exact_point_source_gradient,
    greens_function,
    impedance_boundary_data,
)
from .fem import Helmholtz, PMLProfile, point_source
from .mesh import SIDES, build_mesh, extend_with_pml

UNIT_SQUARE = (-0.5, 0.5, -0.5, 0.5)

__all__ = [
    "Scenario",
    "ExteriorSources",
    "InteriorSource",
    "gaussian_speed",
    "sinusoidal_speed",
    "homogeneous_speed",
    "make_scenario",
]


def homogeneous_speed(x, z):
    return np.ones(np.broadcast(x, z).shape)


homogeneous_speed.constant = 1.0


def gaussian_speed(x, z):
    """Slow Gaussian lens: ``3 - 2.5 exp(-((x + 0.125)^2 + (z - 0.1)^2) / 0.64)``."""
    return 3.0 - 2.5 * np.exp(-((np.asarray(x) + 0.125) ** 2 + (np.asarray(z) - 0.1) ** 2) / 0.8**2)


def sinusoidal_speed(x, z):
    """``1 + 0.5 sin(2 pi x)``; produces caustics from an interior source."""
    return 1.0 + 0.5 * np.sin(2 * np.pi * np.asarray(x)) + 0.0 * np.asarray(z)


def _speed_range(speed, domain, n=201):
    xs = np.linspace(domain[0], domain[1], n)
    zs = np.linspace(domain[2], domain[3], n)
    X, Z = np.meshgrid(xs, zs)
    c = speed(X, Z)
    return float(c.min()), float(c.max())


@dataclass
class Scenario:
    """Base class; subclasses build meshes and problems for a given frequency."""

    domain: tuple = UNIT_SQUARE
    speed: object = homogeneous_speed
    name: str = "scenario"

    @property
    def speed_range(self):
        return _speed_range(self.speed, self.domain)

    def exact(self, points, omega):
        return None

    def has_exact(self):
        return False

    def bearings(self, points):
        """Exact ray angles per point, shape (n, fronts), or None."""
        return None


@dataclass
class ExteriorSources(Scenario):
    """``c = 1``, ``f = 0`` and exact impedance data from sources outside the domain."""

    sources: list = field(default_factory=lambda: list(ONE_SOURCE))
    name: str = "one-source"

    def has_exact(self):
        return True

    def exact(self, points, omega):
        return exact_point_source(points, omega, self.sources)

    def exact_gradient(self, points, omega):
        return exact_point_source_gradient(points, omega, self.sources)

    def bearings(self, points):
        pts = np.atleast_2d(points)
        cols = [np.arctan2(pts[:, 1] - loc[1], pts[:, 0] - loc[0]) for loc, _ in self.sources]
        return np.mod(np.column_stack(cols), 2 * np.pi)

    def exact_rays(self, points):
        return self.bearings(points)

    def mesh(self, h, margin=0.0):
        d = self.domain
        return build_mesh((d[0] - margin, d[1] + margin, d[2] - margin, d[3] + margin), h)

    def problem(self, mesh, omega, beta=1.0, rays=None, quad_order=None):
        g = impedance_boundary_data(
            lambda p: self.exact(p, omega), lambda p: self.exact_gradient(p, omega), beta, omega, 1.0
        )
        return Helmholtz(mesh, omega, self.speed, beta, boundary_data=g, rays=rays, quad_order=quad_order)


@dataclass
class InteriorSource(Scenario):
    """Discrete point source inside the domain, absorbing layers on all sides."""

    source: tuple = (-0.4, -0.4)
    name: str = "interior-source"
    pml_wavelengths: float = 1.0
    reflection: float = 1e-6

    def has_exact(self):
        return getattr(self.speed, "constant", None) is not None

    def exact(self, points, omega):
        if not self.has_exact():
            return None
        return greens_function(points, omega, self.source, self.speed.constant)

    def bearings(self, points):
        if not self.has_exact():
            return None
        pts = np.atleast_2d(points)
        return np.mod(np.arctan2(pts[:, 1] - self.source[1], pts[:, 0] - self.source[0]), 2 * np.pi)[:, None]

    def pml_nodes(self, omega, h):
        cmax = self.speed_range[1]
        wavelength = 2 * np.pi * cmax / omega
        return max(4, int(np.ceil(self.pml_wavelengths * wavelength / h)))

    def mesh(self, h, margin=0.0, omega=None, pml_nodes=None):
        d = self.domain
        base = build_mesh((d[0] - margin, d[1] + margin, d[2] - margin, d[3] + margin), h)
        n = self.pml_nodes(omega, h) if pml_nodes is None else pml_nodes
        return extend_with_pml(base, n * h)

    def problem(self, mesh, omega, beta=0.0, rays=None, quad_order=None):
        profile = PMLProfile.for_mesh(mesh, omega, self.speed_range[1], self.reflection)
        return Helmholtz(
            mesh,
            omega,
            self.speed,
            beta=0.0,
            boundary=dict.fromkeys(SIDES, "dirichlet"),
            pml=profile,
            source=point_source(mesh, self.source),
            rays=rays,
            quad_order=quad_order,
        )


def make_scenario(kind, source=None):
    """Scenario for an experiment kind name."""
    if kind == "one-source":
        return ExteriorSources(sources=list(ONE_SOURCE), name=kind)
    if kind == "four-source":
        return ExteriorSources(sources=list(FOUR_SOURCES), name=kind)
    src = tuple(source) if source is not None else (-0.4, -0.4)
    if kind in ("interior-source-homogeneous", "scaling-sweep"):
        return InteriorSource(speed=homogeneous_speed, source=src, name=kind)
    if kind == "interior-source-gaussian":
        return InteriorSource(speed=gaussian_speed, source=src, name=kind)
    if kind == "sinusoidal-caustic":
        return InteriorSource(speed=sinusoidal_speed, source=src, name=kind)
    raise ValueError(f"unknown experiment kind {kind!r}")
