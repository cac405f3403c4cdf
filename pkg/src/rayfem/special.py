"""Bessel and Hankel functions of real argument.

Integer-order J_n for nonnegative x, and the order 0/1 functions of the
second kind needed for point-source fields. Three regimes are used:

* power series for x < SERIES_MAX,
* Miller backward recurrence normalised by J_0 + 2 sum J_2k = 1,
* Hankel asymptotic expansion once x is large compared to the order.

Functions of the second kind in the recurrence regime come from the
Neumann expansion Y_0 = (2/pi)(log(x/2) + gamma) J_0 - (4/pi) sum (-1)^k J_2k / k,
which stays well conditioned where the power series loses digits.
"""

from __future__ import annotations

import math

import numpy as np

SERIES_MAX = 4.0
ASYMPTOTIC_MIN = 25.0
EULER_GAMMA = 0.57721566490153286061

__all__ = [
    "DomainError",
    "bessel_j",
    "bessel_j_prime",
    "bessel_j_orders",
    "bessel_y0",
    "bessel_y1",
    "hankel1_0",
    "hankel1_1",
]


class DomainError(ValueError):
    """Argument outside the domain supported by an evaluation routine."""


def _check_order(order):
    if int(order) != order or order < 0:
        raise DomainError(f"order must be a nonnegative integer, got {order!r}")
    return int(order)


def _as_nonneg(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(~np.isfinite(x)):
        raise DomainError("argument must be finite and >= 0")
    return x


def _series_j(n, x):
    # sum_m (-1)^m (x/2)^(2m+n) / (m! (m+n)!), terms shrink fast for x < 4
    half = 0.5 * x
    with np.errstate(divide="ignore"):
        term = np.exp(n * np.log(half) - math.lgamma(n + 1)) if n else np.ones_like(half)
    total = term.copy()
    q = -half * half
    for m in range(1, 60):
        term = term * q / (m * (m + n))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total) + 1e-300):
            break
    return total


def _asymptotic_hankel(nu, x):
    """H^(1)_nu(x) from the large-argument expansion, nu in {0, 1, ...}."""
    mu = 4.0 * nu * nu
    z = np.asarray(x, dtype=float)
    total = np.ones_like(z, dtype=complex)
    term = np.ones_like(z, dtype=complex)
    best = np.abs(term)
    for k in range(1, 60):
        term = term * 1j * (mu - (2 * k - 1) ** 2) / (8.0 * k * z)
        mag = np.abs(term)
        grow = mag > best
        if np.all(grow | (mag < 1e-17)):
            break
        total = total + np.where(grow, 0.0, term)
        best = np.minimum(best, mag)
        if np.all(mag < 1e-17):
            break
    # rotate separately: forming z - pi/4 in floating point costs ulp(z) of phase
    shift = np.exp(-1j * (0.5 * nu + 0.25) * math.pi)
    return np.sqrt(2.0 / (math.pi * z)) * (np.cos(z) + 1j * np.sin(z)) * shift * total


def _miller(nmax, x):
    """Rows J_0..J_nmax at each x (x > 0) by normalised backward recurrence."""
    x = np.asarray(x, dtype=float)
    xmax = float(x.max()) if x.size else 0.0
    top = max(nmax, int(xmax)) + 20 + int(math.sqrt(40.0 * max(nmax, xmax, 1.0)))
    top += top % 2
    out = np.zeros((nmax + 1,) + x.shape)
    nxt = np.zeros_like(x)
    cur = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    for k in range(top, 0, -1):
        # cur holds J_k (unnormalised); produce J_{k-1}
        if k <= nmax:
            out[k] = cur
        if k % 2 == 0:
            norm += 2.0 * cur
        prev = (2.0 * k / x) * cur - nxt
        nxt, cur = cur, prev
        big = np.abs(cur) > 1e200
        if np.any(big):
            scale = np.where(big, 1e-200, 1.0)
            cur *= scale
            nxt *= scale
            norm *= scale
            out[min(k, nmax + 1):] *= scale
    out[0] = cur
    norm += cur
    return out / norm


def bessel_j_orders(nmax, x):
    """J_0(x), ..., J_nmax(x) stacked along the first axis."""
    nmax = _check_order(nmax)
    x = _as_nonneg(x)
    flat = np.atleast_1d(x).ravel()
    out = np.zeros((nmax + 1, flat.size))
    zero = flat == 0.0
    out[0, zero] = 1.0
    small = (~zero) & (flat < SERIES_MAX)
    rest = ~(zero | small)
    if np.any(small):
        for n in range(nmax + 1):
            out[n, small] = _series_j(n, flat[small])
    if np.any(rest):
        idx = np.flatnonzero(rest)
        # bucket by magnitude so the recurrence start is not set by the largest x
        buckets = np.floor(np.log2(flat[idx]) * 4).astype(int)
        for b in np.unique(buckets):
            sel = idx[buckets == b]
            out[:, sel] = _miller(nmax, flat[sel])
    return out.reshape((nmax + 1,) + x.shape)


def bessel_j(order, x):
    """Bessel function of the first kind J_order(x) for x >= 0."""
    n = _check_order(order)
    x = _as_nonneg(x)
    flat = np.atleast_1d(x).ravel()
    out = np.empty(flat.size)
    large = flat >= max(ASYMPTOTIC_MIN, float(n * n))
    if np.any(large):
        out[large] = _asymptotic_hankel(n, flat[large]).real
    if np.any(~large):
        out[~large] = bessel_j_orders(n, flat[~large])[n]
    out = out.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def bessel_j_prime(order, x):
    """Derivative d/dx J_order(x)."""
    n = _check_order(order)
    if n == 0:
        return -bessel_j(1, x)
    return 0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))


def _series_y01(x):
    # DLMF 10.8.1 for n = 0, 1 with psi(k+1) = -gamma + H_k
    half = 0.5 * x
    q = -half * half
    lg = np.log(half)
    j0 = _series_j(0, x)
    j1 = _series_j(1, x)
    s0 = np.zeros_like(x)
    s1 = np.zeros_like(x)
    t0 = np.ones_like(x)
    t1 = half.copy()
    harm = 0.0
    for k in range(0, 60):
        psi_k1 = -EULER_GAMMA + harm
        psi_k2 = psi_k1 + 1.0 / (k + 1)
        s0 = s0 + 2.0 * psi_k1 * t0
        s1 = s1 + (psi_k1 + psi_k2) * t1
        harm += 1.0 / (k + 1)
        t0 = t0 * q / ((k + 1) * (k + 1))
        t1 = t1 * q / ((k + 1) * (k + 2))
        if np.all(np.abs(t0) < 1e-18) and np.all(np.abs(t1) < 1e-18):
            break
    y0 = (2.0 / math.pi) * lg * j0 - s0 / math.pi
    y1 = -1.0 / (math.pi * half) + (2.0 / math.pi) * lg * j1 - s1 / math.pi
    return y0, y1


def _neumann_y01(x):
    nmax = int(x.max()) + 40
    nmax += nmax % 2
    j = bessel_j_orders(nmax, x)
    lg = np.log(0.5 * x) + EULER_GAMMA
    ks = np.arange(1, nmax // 2)
    sign = np.where(ks % 2 == 0, 1.0, -1.0)[:, None]
    even = j[2 * ks]
    tail = np.sum(sign * even / ks[:, None], axis=0)
    y0 = (2.0 / math.pi) * lg * j[0] - (4.0 / math.pi) * tail
    # Y_1 = -Y_0', with J_2k' = (J_{2k-1} - J_{2k+1}) / 2
    dtail = np.sum(sign * 0.5 * (j[2 * ks - 1] - j[2 * ks + 1]) / ks[:, None], axis=0)
    dy0 = (2.0 / math.pi) * (j[0] / x - lg * j[1]) - (4.0 / math.pi) * dtail
    return y0, -dy0


def _y01(x):
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    if np.any(flat <= 0) or np.any(~np.isfinite(flat)):
        raise DomainError("argument must be finite and > 0")
    y0 = np.empty(flat.size)
    y1 = np.empty(flat.size)
    j0 = np.empty(flat.size)
    j1 = np.empty(flat.size)
    small = flat < SERIES_MAX
    large = flat >= ASYMPTOTIC_MIN
    mid = ~(small | large)
    if np.any(small):
        y0[small], y1[small] = _series_y01(flat[small])
        j0[small] = _series_j(0, flat[small])
        j1[small] = _series_j(1, flat[small])
    if np.any(mid):
        y0[mid], y1[mid] = _neumann_y01(flat[mid])
        jj = bessel_j_orders(1, flat[mid])
        j0[mid], j1[mid] = jj[0], jj[1]
    if np.any(large):
        h0 = _asymptotic_hankel(0, flat[large])
        h1 = _asymptotic_hankel(1, flat[large])
        j0[large], y0[large] = h0.real, h0.imag
        j1[large], y1[large] = h1.real, h1.imag
    shape = x.shape
    return (j0.reshape(shape), y0.reshape(shape), j1.reshape(shape), y1.reshape(shape))


def _scalar(a):
    return a.item() if np.ndim(a) == 0 else a


def bessel_y0(x):
    return _scalar(_y01(x)[1])


def bessel_y1(x):
    return _scalar(_y01(x)[3])


def hankel1_0(x):
    """H_0^(1)(x) = J_0(x) + i Y_0(x) for x > 0."""
    j0, y0, _, _ = _y01(x)
    return _scalar(j0 + 1j * y0)


def hankel1_1(x):
    """H_1^(1)(x) = J_1(x) + i Y_1(x) for x > 0; note d/dx H_0^(1) = -H_1^(1)."""
    _, _, j1, y1 = _y01(x)
    return _scalar(j1 + 1j * y1)
