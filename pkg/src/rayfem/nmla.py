"""Numerical micro-local analysis: dominant plane-wave directions at a point.

The impedance trace ``U = u + (1/ik) du/dr`` on a circle of radius ``r``
around ``x0`` is deconvolved mode by mode so that a superposition of plane
waves ``sum B_n exp(i k d_n . (x - x0))`` becomes ``sum B_n S_L(theta - theta_n)``
with the normalised Dirichlet kernel ``S_L``. Peaks of ``|BU|`` give the angles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .special import bessel_j_orders

TWO_PI = 2.0 * np.pi
MIN_DIVISOR = 1e-14
PROMINENCE = 0.9

__all__ = [
    "NMLAError",
    "NMLAConfig",
    "ImpedanceSamples",
    "FilteredSignal",
    "DirectionEstimate",
    "l_alpha",
    "dirichlet_kernel",
    "mode_factors",
    "sample_impedance",
    "samples_from_function",
    "nmla_filter",
    "sharp_peak_locations",
    "clean_peak_locations",
    "find_directions",
    "nmla",
    "sampling_plan",
    "sample_count",
    "min_radius",
]


class NMLAError(ValueError):
    """Sampling circle leaves the field's mesh or the filter is ill posed."""


@dataclass(frozen=True)
class NMLAConfig:
    """Tunable constants.

    The circle radius is ``max(wavelengths * lambda, radius_scale * omega**-0.5)``,
    capped at ``max_radius`` when given.
    """

    radius_scale: float = 3.0
    wavelengths: float = 0.0
    max_radius: float | None = None
    shrink_min: float = 0.25
    peak_method: str = "peaks"
    max_directions: int = 8
    oversampling: int = 4
    threshold: float = 0.5
    floor: float = 1e-8
    min_samples: int = 16

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.radius_scale <= 0 or self.oversampling < 1:
            raise ValueError("radius_scale and oversampling must be positive")
        if self.wavelengths < 0:
            raise ValueError("wavelengths must be non-negative")
        if self.peak_method not in ("peaks", "clean"):
            raise ValueError(f"unknown peak method {self.peak_method!r}")
        if self.max_directions < 1:
            raise ValueError("max_directions must be >= 1")
        if not 0 < self.shrink_min <= 1:
            raise ValueError("shrink_min must lie in (0, 1]")
        if self.max_radius is not None and self.max_radius <= 0:
            raise ValueError("max_radius must be positive")


def l_alpha(alpha):
    """Fourier truncation ``max(1, [a], [a + a^(1/3) - 2.5])``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return int(max(1, np.floor(alpha), np.floor(alpha + alpha ** (1.0 / 3.0) - 2.5)))


def dirichlet_kernel(L, theta):
    """``S_L(t) = sin((2L+1) t/2) / ((2L+1) sin(t/2))``, equal to 1 at t = 0."""
    t = np.asarray(theta, dtype=float)
    n = 2 * L + 1
    num = np.sin(0.5 * n * t)
    den = n * np.sin(0.5 * t)
    small = np.abs(den) < 1e-12
    return np.where(small, np.cos(0.5 * n * t) / np.where(small, np.cos(0.5 * t), 1.0), num / np.where(small, 1.0, den))


def mode_factors(alpha, L):
    """Per-mode response ``i^l (J_l(a) - i J_l'(a))`` of a unit plane wave, l = -L..L.

    Jacobi-Anger gives this as the l-th Fourier coefficient of the impedance
    trace of ``exp(i alpha cos(theta))``; dividing by it maps each plane wave
    to a kernel centred on its direction.
    """
    j = bessel_j_orders(L + 1, alpha)
    jp = np.empty(L + 1)
    jp[0] = -j[1]
    jp[1:] = 0.5 * (j[:-2] - j[2:])
    pos = (1j) ** np.arange(L + 1) * (j[: L + 1] - 1j * jp)
    # J_{-l} = (-1)^l J_l and i^{-l} = (-1)^l i^l, so the factor is even in l
    return np.concatenate([pos[:0:-1], pos])


@dataclass(frozen=True)
class ImpedanceSamples:
    center: np.ndarray
    radius: float
    angles: np.ndarray
    values: np.ndarray
    alpha: float

    @property
    def count(self):
        return self.angles.size


@dataclass(frozen=True)
class FilteredSignal:
    angles: np.ndarray
    values: np.ndarray
    L: int
    scale: np.ndarray
    modes: np.ndarray

    @property
    def resolution(self):
        return TWO_PI / (2 * self.L + 1)

    def at(self, theta):
        """Band-limited evaluation of BU at arbitrary angles."""
        ls = np.arange(-self.L, self.L + 1)
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        return np.exp(1j * np.outer(t, ls)) @ self.modes


@dataclass(frozen=True)
class DirectionEstimate:
    angles: np.ndarray
    amplitudes: np.ndarray
    peaks: np.ndarray
    resolution: float

    @property
    def directions(self):
        return np.column_stack([np.cos(self.angles), np.sin(self.angles)])

    def __len__(self):
        return self.angles.size


def _uniform_angles(M):
    return TWO_PI * np.arange(M) / M


def samples_from_function(x0, radius, M, k, u, grad_u):
    """Impedance samples from callables ``u(points)`` and ``grad_u(points)``."""
    theta = _uniform_angles(M)
    s = np.column_stack([np.cos(theta), np.sin(theta)])
    pts = np.asarray(x0, dtype=float) + radius * s
    val = u(pts) + np.einsum("mk,mk->m", grad_u(pts), s) / (1j * k)
    return ImpedanceSamples(np.asarray(x0, dtype=float), float(radius), theta, val, float(k * radius))


def sample_impedance(field, x0, r, M, omega, c=1.0):
    """``U(theta_m) = u + c(x0)/(i omega) du/dr`` on the circle, from the field's own basis."""
    x0 = np.asarray(x0, dtype=float)
    xmin, xmax, zmin, zmax = field.mesh.domain
    tol = 1e-12
    if x0[0] - r < xmin - tol or x0[0] + r > xmax + tol or x0[1] - r < zmin - tol or x0[1] + r > zmax + tol:
        raise NMLAError(f"circle of radius {r:g} at {tuple(x0)} leaves the mesh")
    cval = float(c(x0[0], x0[1])) if callable(c) else float(c)
    k = omega / cval
    return samples_from_function(x0, r, M, k, field.evaluate, field.gradient)


def nmla_filter(samples, L=None):
    """Deconvolve the impedance samples into ``BU`` on the same angle grid."""
    L = l_alpha(samples.alpha) if L is None else L
    M = samples.count
    if M < 2 * L + 2:
        raise NMLAError(f"{M} samples cannot resolve {2 * L + 1} Fourier modes")
    ls = np.arange(-L, L + 1)
    # (1/M) sum_m U_m exp(-i l theta_m), read off the FFT
    fft = np.fft.fft(samples.values) / M
    fu = fft[ls % M]
    scale = mode_factors(samples.alpha, L)
    if np.any(np.abs(scale) < MIN_DIVISOR):
        raise NMLAError("Bessel divisor vanishes; change the sampling radius")
    modes = fu / scale / (2 * L + 1)
    values = np.exp(1j * np.outer(samples.angles, ls)) @ modes
    return FilteredSignal(samples.angles, values, L, scale, modes)


def sharp_peak_locations(signal, threshold=0.5, floor=1e-8):
    """Local maxima of ``|BU|`` above ``threshold * max``, refined and merged.

    Each grid maximum is refined by a three-point parabola and then polished
    on the band-limited signal; peaks closer than the resolution width keep
    only the stronger one.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    mag = np.abs(signal.values)
    M = mag.size
    top = mag.max() if M else 0.0
    empty = DirectionEstimate(np.zeros(0), np.zeros(0, dtype=complex), np.zeros(0), signal.resolution)
    if top < floor:
        return empty
    prev, nxt = np.roll(mag, 1), np.roll(mag, -1)
    cand = np.flatnonzero((mag >= prev) & (mag > nxt) & (mag >= threshold * top))
    step = TWO_PI / M
    angles = []
    for m in cand:
        y0, y1, y2 = prev[m], mag[m], nxt[m]
        den = y0 - 2.0 * y1 + y2
        delta = 0.5 * (y0 - y2) / den if den < 0 else 0.0
        guess = signal.angles[m] + np.clip(delta, -0.5, 0.5) * step
        angles.append(_polish(signal, guess, step))
    angles = np.mod(np.asarray(angles, dtype=float), TWO_PI)
    if angles.size == 0:
        return empty
    amps = signal.at(angles)
    peaks = np.abs(amps)
    # strongest first, drop anything within the resolution width of a kept peak
    keep = []
    for i in np.argsort(-peaks, kind="stable"):
        gap = [abs((angles[i] - angles[j] + np.pi) % TWO_PI - np.pi) for j in keep]
        if all(g > signal.resolution for g in gap):
            keep.append(i)
    keep = np.asarray(keep)
    order = np.argsort(angles[keep])
    sel = keep[order]
    return DirectionEstimate(angles[sel], amps[sel], peaks[sel], signal.resolution)


def _polish(signal, guess, step):
    res = minimize_scalar(
        lambda t: -abs(signal.at(t)[0]),
        bounds=(guess - step, guess + step),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return res.x if res.success else guess


def clean_peak_locations(signal, threshold=0.5, floor=1e-8, max_directions=8):
    """Greedy kernel subtraction: take the strongest peak, remove ``B S_L(theta - theta_n)``, repeat.

    Unlike plain peak picking this does not report the sidelobes of a strong
    wave as directions of their own. Stops once the residual maximum drops
    below ``threshold`` times the original maximum.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    L = signal.L
    n = 2 * L + 1
    ls = np.arange(-L, L + 1)
    modes = signal.modes.copy()
    grid = signal.angles
    E = np.exp(1j * np.outer(grid, ls))
    top = np.abs(E @ modes).max() if grid.size else 0.0
    empty = DirectionEstimate(np.zeros(0), np.zeros(0, dtype=complex), np.zeros(0), signal.resolution)
    if top < floor:
        return empty
    step = TWO_PI / grid.size
    angles, amps = [], []
    while len(angles) < max_directions:
        resid = FilteredSignal(grid, E @ modes, L, signal.scale, modes)
        mag = np.abs(resid.values)
        m = int(np.argmax(mag))
        if mag[m] < threshold * top:
            break
        t = _polish(resid, grid[m], step)
        b = resid.at(t)[0]
        # a kernel lobe drops to ~2/pi half a resolution width away; a flat
        # residual (no plane-wave structure left) does not
        sides = np.abs(resid.at([t - 0.5 * signal.resolution, t + 0.5 * signal.resolution]))
        if sides.max() > PROMINENCE * abs(b):
            break
        if any(abs(wrap) <= signal.resolution for wrap in ((t - a + np.pi) % TWO_PI - np.pi for a in angles)):
            # a second hit inside an accepted lobe means the model is exhausted
            break
        angles.append(t)
        amps.append(b)
        modes = modes - b * np.exp(-1j * ls * t) / n
    if not angles:
        return empty
    angles, amps = _refine_jointly(signal, np.asarray(angles), np.asarray(amps), step)
    angles = np.mod(angles, TWO_PI)
    order = np.argsort(angles)
    return DirectionEstimate(angles[order], amps[order], np.abs(amps[order]), signal.resolution)


def _refine_jointly(signal, angles, amps, step, sweeps=3):
    # greedy picks are biased by the other waves' kernels; re-fit each one
    # against the signal with all the others removed
    L = signal.L
    ls = np.arange(-L, L + 1)
    atoms = lambda t: np.exp(-1j * ls * t) / (2 * L + 1)
    angles, amps = angles.copy(), amps.copy()
    for _ in range(sweeps):
        for i in range(angles.size):
            others = sum((amps[j] * atoms(angles[j]) for j in range(angles.size) if j != i), np.zeros_like(signal.modes))
            resid = FilteredSignal(signal.angles, signal.values, L, signal.scale, signal.modes - others)
            angles[i] = _polish(resid, angles[i], step)
            amps[i] = resid.at(angles[i])[0]
    return angles, amps


def find_directions(signal, config):
    """Peak selection according to ``config.peak_method``."""
    if config.peak_method == "clean":
        return clean_peak_locations(signal, config.threshold, config.floor, config.max_directions)
    return sharp_peak_locations(signal, config.threshold, config.floor)


def sampling_plan(omega, speed, config=NMLAConfig()):
    """Radius and sample count for a field of frequency ``omega``."""
    k = omega / speed
    r = max(config.wavelengths * TWO_PI / k, config.radius_scale * omega**-0.5)
    if config.max_radius is not None:
        r = min(r, config.max_radius)
    return r, sample_count(k * r, config)


def sample_count(alpha, config=NMLAConfig()):
    """``max(2 L + 2, C_M ceil(alpha), min_samples)``."""
    return max(2 * l_alpha(alpha) + 2, config.oversampling * int(np.ceil(alpha)), config.min_samples)


def min_radius(omega, speed, config=NMLAConfig()):
    """Smallest radius a circle may shrink to near a boundary: ``shrink_min`` times the planned one."""
    return config.shrink_min * sampling_plan(omega, speed, config)[0]


def nmla(x0, field, omega, c=1.0, config=NMLAConfig(), radius=None):
    """Dominant directions of ``field`` at ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    cval = float(c(x0[0], x0[1])) if callable(c) else float(c)
    r, M = sampling_plan(omega, cval, config)
    if radius is not None:
        r = radius
        M = sample_count(omega / cval * r, config)
    samples = sample_impedance(field, x0, r, M, omega, cval)
    signal = nmla_filter(samples)
    return find_directions(signal, config)
