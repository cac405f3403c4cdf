"""Layered polarized-traces (source transfer) preconditioner.

The depth rows of the global system are split into slabs. Each slab is
re-assembled on its own mesh, extended by absorbing layers past every
interior interface, and factorized once. One application runs a downward
sweep that transfers interface sources ``-H[a, a-1] w[a-1]`` and
``H[a-1, a] w[a]`` into each next slab, then an upward sweep doing the same
from above; the result is the concatenation of the upward slab solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..fem import Helmholtz, as_speed, assemble
from ..mesh import Mesh, SIDES
from ..rays import RayField
from .direct import LocalFactorization, SingularMatrixError, factorize

DEFAULT_REFLECTION = 1e-6

__all__ = [
    "SlabProfile",
    "Layer",
    "LayeredPartition",
    "build_partition",
    "factorize_all",
    "gs_preconditioner",
    "PolarizedTraces",
    "default_layer_rows",
    "default_interface_pml",
]


def default_layer_rows(npw, wavelengths=4):
    """About four wavelengths of rows per slab, at least three."""
    return max(3, int(round(wavelengths * npw)))


def default_interface_pml(omega, base=6, per_octave=4, omega_ref=2 * np.pi * 10):
    """Interface layer nodes: ``base`` plus ``per_octave`` for each doubling of ``omega`` above ``omega_ref``."""
    return int(round(base + per_octave * math.log2(max(omega, omega_ref) / omega_ref)))


@dataclass(frozen=True)
class SlabProfile:
    """Global stretching plus quadratic ramps below ``z_low`` and above ``z_high``."""

    omega: float
    base: object
    z_low: float | None
    z_high: float | None
    width: float
    sigma_max: float

    def _ramp(self, t):
        return self.sigma_max * np.clip(t / self.width, 0.0, None) ** 2

    def sigma_x(self, x):
        return self.base.sigma_x(x) if self.base is not None else np.zeros_like(np.asarray(x, dtype=float))

    def sigma_z(self, z):
        z = np.asarray(z, dtype=float)
        s = self.base.sigma_z(z) if self.base is not None else np.zeros_like(z)
        if self.z_low is not None:
            s = s + self._ramp(self.z_low - z)
        if self.z_high is not None:
            s = s + self._ramp(z - self.z_high)
        return s

    def stretch_x(self, x):
        return 1.0 + 1j * self.sigma_x(x) / self.omega

    def stretch_z(self, z):
        return 1.0 + 1j * self.sigma_z(z) / self.omega


@dataclass
class Layer:
    """One slab: owned global rows ``[a, b)`` and its local system.

    Local row ``r`` sits at global row ``lo + r`` (which may fall outside the
    global mesh inside an interface extension).
    """

    index: int
    a: int
    b: int
    lo: int
    matrix: object
    blocks: np.ndarray
    factor: LocalFactorization | None = None

    def rows(self, g0, g1):
        """Local dof slice for global rows ``[g0, g1)``."""
        return slice(self.blocks[g0 - self.lo], self.blocks[g1 - self.lo])

    def block(self, gi, gj):
        return self.matrix[self.rows(gi, gi + 1), self.rows(gj, gj + 1)]


@dataclass
class LayeredPartition:
    layers: list
    global_blocks: np.ndarray
    pml_nodes: int
    # cached interface blocks, filled by build_partition
    down: dict
    up: dict

    @property
    def num_layers(self):
        return len(self.layers)

    @property
    def dim(self):
        return int(self.global_blocks[-1])


class _RowRays:
    """Global rays re-indexed onto a slab, clamping rows past the global mesh."""

    def __init__(self, rays, nx, rows):
        idx = (rows[:, None] * nx + np.arange(nx)[None, :]).ravel()
        self.field = RayField(rays.angles[idx], rays.counts[idx], rays.provenance[idx])
        self.counts = self.field.counts
        self.standard = self.field.standard

    def directions(self):
        return self.field.directions()


def _slab_problem(problem, a, b, ext_lo, ext_hi, pml_nodes, omega, c_max, reflection):
    mesh = problem.mesh
    h = mesh.h
    nz = mesh.nz
    lo = a - ext_lo
    zs = mesh.zs[a] + h * np.arange(-ext_lo, (b - a) + ext_hi)
    # keep the exact global coordinates on rows that exist globally
    real = (np.arange(lo, lo + zs.size) >= 0) & (np.arange(lo, lo + zs.size) < nz)
    zs[real] = mesh.zs[np.arange(lo, lo + zs.size)[real]]
    width = pml_nodes * h
    smax = 3.0 * math.log(1.0 / reflection) * c_max / (2.0 * width)
    z_low = mesh.zs[a - 1] if ext_lo else None
    z_high = mesh.zs[b] if ext_hi else None
    profile = SlabProfile(omega, problem.pml, z_low, z_high, width, smax)
    boundary = dict(problem.boundary)
    if ext_lo:
        boundary["bottom"] = "dirichlet"
    if ext_hi:
        boundary["top"] = "dirichlet"
    pml = dict(mesh.pml)
    pml["bottom"] = ext_lo if ext_lo else (mesh.pml["bottom"] if a == 0 else 0)
    pml["top"] = ext_hi if ext_hi else (mesh.pml["top"] if b == nz else 0)
    slab = Mesh(mesh.xs, zs, h, mesh.physical, pml)
    rays = None
    if problem.rays is not None:
        rows = np.clip(np.arange(lo, lo + zs.size), 0, nz - 1)
        rays = _RowRays(problem.rays, mesh.nx, rows)
    local = replace(problem, mesh=slab, pml=profile, boundary=boundary, source=None, boundary_data=None, rays=rays)
    return local, lo


def build_partition(system, layer_rows, pml_nodes=6, omega=None, c=None, reflection=DEFAULT_REFLECTION):
    """Split ``system``'s depth rows into slabs of ``layer_rows`` and assemble each.

    ``omega`` and ``c`` default to those of the system's problem; ``c`` only
    sets the interface damping strength through its maximum on the mesh.
    """
    if layer_rows < 1:
        raise ValueError("layers must be at least one row thick")
    if pml_nodes < 1:
        raise ValueError("interface absorbing layers need at least one node")
    problem = system.problem
    mesh = problem.mesh
    omega = problem.omega if omega is None else omega
    speed = as_speed(problem.speed if c is None else c)
    nodes = mesh.nodes
    c_max = float(np.max(speed(nodes[:, 0], nodes[:, 1])))
    nz = mesh.nz
    nlayers = max(1, nz // layer_rows)
    cuts = np.linspace(0, nz, nlayers + 1).round().astype(int)
    if np.any(np.diff(cuts) < 1):
        raise ValueError("a layer would be thinner than one row")
    ext = pml_nodes + 1
    layers = []
    for ell in range(nlayers):
        a, b = int(cuts[ell]), int(cuts[ell + 1])
        ext_lo = ext if ell > 0 else 0
        ext_hi = ext if ell < nlayers - 1 else 0
        local, lo = _slab_problem(problem, a, b, ext_lo, ext_hi, pml_nodes, omega, c_max, reflection)
        if ext_lo == 0 and ext_hi == 0:
            sys_l = system
            blocks = system.row_blocks
        else:
            sys_l = assemble(local)
            blocks = sys_l.row_blocks
        layers.append(Layer(ell, a, b, lo, sys_l.matrix.tocsr(), np.asarray(blocks)))
    down, up = {}, {}
    for ell, L in enumerate(layers):
        if ell > 0:
            down[ell] = (L.block(L.a, L.a - 1), L.block(L.a - 1, L.a))
        if ell < nlayers - 1:
            up[ell] = (L.block(L.b - 1, L.b), L.block(L.b, L.b - 1))
    return LayeredPartition(layers, np.asarray(system.row_blocks), pml_nodes, down, up)


def factorize_all(partition):
    for L in partition.layers:
        try:
            L.factor = factorize(L.matrix, label=f"layer {L.index}")
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"layer {L.index}: {exc}") from exc
    return [L.factor for L in partition.layers]


def gs_preconditioner(partition, f, extra_step=True):
    """One downward and one upward sweep; returns an approximation of ``H^{-1} f``."""
    layers = partition.layers
    gb = partition.global_blocks
    f = np.asarray(f, dtype=complex)
    nl = len(layers)
    if nl == 1:
        return layers[0].factor.solve(f)

    def local_rhs(L):
        rhs = np.zeros(L.matrix.shape[0], dtype=complex)
        rhs[L.rows(L.a, L.b)] = f[gb[L.a]:gb[L.b]]
        return rhs

    def add_down(rhs, L, w_prev, P):
        h1, h0 = partition.down[L.index]
        rhs[L.rows(L.a, L.a + 1)] -= h1 @ w_prev[P.rows(L.a - 1, L.a)]
        rhs[L.rows(L.a - 1, L.a)] += h0 @ w_prev[P.rows(L.a, L.a + 1)]

    w = [None] * nl
    for ell in range(nl):
        L = layers[ell]
        rhs = local_rhs(L)
        if ell > 0:
            add_down(rhs, L, w[ell - 1], layers[ell - 1])
        w[ell] = L.factor.solve(rhs)
    u = [None] * nl
    for ell in range(nl - 1, -1, -1):
        L = layers[ell]
        rhs = local_rhs(L)
        if ell < nl - 1:
            N = layers[ell + 1]
            h1, h0 = partition.up[ell]
            top = u[ell + 1][N.rows(L.b, L.b + 1)]
            if extra_step:
                # the slab above reproduced w only on its own side of the interface
                # (zero on its extension row), so transfer just the part generated above
                top = top - w[ell][L.rows(L.b, L.b + 1)]
            rhs[L.rows(L.b - 1, L.b)] -= h1 @ top
            rhs[L.rows(L.b, L.b + 1)] += h0 @ u[ell + 1][N.rows(L.b - 1, L.b)]
        if ell > 0 and extra_step:
            add_down(rhs, L, w[ell - 1], layers[ell - 1])
        u[ell] = L.factor.solve(rhs)
    return np.concatenate([u[ell][layers[ell].rows(layers[ell].a, layers[ell].b)] for ell in range(nl)])


class PolarizedTraces:
    """Factorized partition usable as a preconditioner callable."""

    def __init__(self, system, layer_rows, pml_nodes=6, extra_step=True, **kw):
        self.partition = build_partition(system, layer_rows, pml_nodes, **kw)
        factorize_all(self.partition)
        self.extra_step = extra_step

    def __call__(self, f):
        return gs_preconditioner(self.partition, f, self.extra_step)
