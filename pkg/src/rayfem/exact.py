"""Closed-form reference fields for homogeneous media (c = 1)."""

from __future__ import annotations

import numpy as np

from .special import hankel1_0, hankel1_1

ONE_SOURCE = [((2.0, 2.0), 1.0)]
FOUR_SOURCES = [
    ((-20.0, -20.0), 1.0),
    ((20.0, 20.0), 2.0),
    ((-20.0, 20.0), 0.5),
    ((20.0, -20.0), -1.0),
]

__all__ = [
    "ONE_SOURCE",
    "FOUR_SOURCES",
    "SourceSingularity",
    "exact_point_source",
    "exact_point_source_gradient",
    "impedance_boundary_data",
    "greens_function",
    "plane_wave",
]


class SourceSingularity(ValueError):
    pass


def _distances(points, loc):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = pts - np.asarray(loc, dtype=float)
    r = np.hypot(d[:, 0], d[:, 1])
    if np.any(r == 0):
        raise SourceSingularity(f"evaluation at the source location {tuple(loc)}")
    return d, r


def exact_point_source(points, omega, sources=ONE_SOURCE):
    """``sum_s a_s sqrt(omega) H0(omega |x - x_s|)`` at each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    u = np.zeros(pts.shape[0], dtype=complex)
    for loc, amp in sources:
        _, r = _distances(pts, loc)
        u += amp * np.sqrt(omega) * hankel1_0(omega * r)
    return u


def exact_point_source_gradient(points, omega, sources=ONE_SOURCE):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    g = np.zeros(pts.shape, dtype=complex)
    for loc, amp in sources:
        d, r = _distances(pts, loc)
        dh = -omega * hankel1_1(omega * r)
        g += (amp * np.sqrt(omega) * dh / r)[:, None] * d
    return g


def greens_function(points, omega, source, speed=1.0):
    """Outgoing solution of ``-lap u - k^2 u = delta_source``: ``(i/4) H0(k r)``."""
    _, r = _distances(points, source)
    return 0.25j * hankel1_0(omega / speed * r)


def plane_wave(points, omega, direction, speed=1.0):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.exp(1j * omega / speed * (pts @ np.asarray(direction, dtype=float)))


def impedance_boundary_data(u, grad_u, beta, omega, speed=1.0):
    """``g(x, z, nx, nz) = du/dn + i beta k u`` built from exact ``u`` and ``grad u``.

    ``u`` and ``grad_u`` take an ``(n, 2)`` point array; ``speed`` may be a
    constant or a callable ``c(x, z)``.
    """

    def g(x, z, nx, nz):
        shape = np.shape(x)
        pts = np.column_stack([np.ravel(x), np.ravel(z)])
        c = speed(pts[:, 0], pts[:, 1]) if callable(speed) else speed
        k = omega / c
        grad = grad_u(pts)
        dn = grad[:, 0] * np.ravel(nx) + grad[:, 1] * np.ravel(nz)
        return (dn + 1j * beta * k * u(pts)).reshape(shape)

    return g
