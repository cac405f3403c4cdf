"""Quadrature rules on the reference triangle and the unit interval."""

from __future__ import annotations

from functools import lru_cache
import math

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_ORDER = 12


@lru_cache(maxsize=None)
def reference_quadrature(order):
    """Collapsed (conical product) Gauss rule on {x, y >= 0, x + y <= 1}.

    Exact for polynomials of total degree ``order``; weights are positive
    and sum to 1/2. Returns ``(points, weights)`` with points of shape (n, 2).
    """
    if int(order) != order or not 1 <= order <= MAX_ORDER:
        raise ValueError(f"unsupported quadrature order {order!r} (1..{MAX_ORDER})")
    n = math.ceil((order + 1) / 2)
    # x = s, y = t (1 - s); Jacobi weight (1 - s) absorbs the Jacobian
    xi, wj = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xi + 1.0)
    ws = 0.25 * wj
    eta, wl = roots_legendre(n)
    t = 0.5 * (eta + 1.0)
    wt = 0.5 * wl
    S, T = np.meshgrid(s, t, indexing="ij")
    pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
    w = np.outer(ws, wt).ravel()
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


@lru_cache(maxsize=None)
def interval_quadrature(order):
    """Gauss-Legendre rule on [0, 1] exact to degree ``order``."""
    if int(order) != order or order < 1:
        raise ValueError(f"unsupported quadrature order {order!r}")
    n = math.ceil((order + 1) / 2)
    x, w = roots_legendre(n)
    pts, wts = 0.5 * (x + 1.0), 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts
