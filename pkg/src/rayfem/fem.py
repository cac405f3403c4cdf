"""Galerkin assembly for the 2D Helmholtz equation on structured meshes.

Solves ``-div(grad u) - k(x)^2 u = f`` with ``k = omega / c``, optionally
with impedance data ``du/dn + i beta k u = g`` on chosen sides and complex
coordinate stretching (PML) ``s = 1 + i sigma / omega`` along each axis.
Two bases share one code path:

* standard P1 hats ``phi_j``;
* ray-enriched functions ``phi_j(x) exp(i k_j d_{j,l} . x)`` with
  ``k_j = omega / c(x_j)`` and unit directions ``d_{j,l}`` per node.

Matrix entries are ``H[m, n] = B(psi_n, psi_m)`` and the load is
``b[m] = F(psi_m)``, so ``H @ v = b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, SIDES
from .quadrature import interval_quadrature, reference_quadrature

NORMALS = {"left": (-1.0, 0.0), "right": (1.0, 0.0), "bottom": (0.0, -1.0), "top": (0.0, 1.0)}
DEFAULT_ORDER_P1 = 6
DEFAULT_ORDER_RAY = 9

__all__ = [
    "PMLProfile",
    "NodalSource",
    "BasisDescriptor",
    "Helmholtz",
    "SparseSystem",
    "make_basis",
    "assemble",
    "assemble_sfem",
    "assemble_rayfem",
    "assemble_pml",
    "point_source",
    "as_speed",
]


def as_speed(c):
    """Wrap a constant wave speed into a vectorised callable ``c(x, z)``."""
    if callable(c):
        return c
    value = float(c)
    if value <= 0:
        raise ValueError("wave speed must be positive")

    def const(x, z):
        return np.full(np.broadcast(x, z).shape, value)

    const.constant = value
    return const


@dataclass(frozen=True)
class PMLProfile:
    """Damping ``sigma(t) = sigma_max (t / width)^degree`` outside ``box``.

    ``t`` is the distance past the box edge on each side; sides with zero
    width carry no damping.
    """

    omega: float
    box: tuple
    widths: dict
    sigma_max: dict
    degree: int = 2

    @classmethod
    def for_mesh(cls, mesh, omega, c_max=1.0, reflection=1e-6, degree=2, strength=None):
        """Profile matching the PML frame of an extended mesh.

        ``sigma_max = strength * log(1/R) * c_max / (2 width)``; the default
        strength ``degree + 1`` makes the round-trip amplitude of a normally
        incident wave equal to ``reflection``.
        """
        widths = {s: mesh.pml[s] * mesh.h for s in SIDES}
        return cls.from_widths(omega, _physical_box(mesh), widths, c_max, reflection, degree, strength)

    @classmethod
    def from_widths(cls, omega, box, widths, c_max=1.0, reflection=1e-6, degree=2, strength=None):
        strength = degree + 1 if strength is None else strength
        smax = {
            s: (strength * np.log(1.0 / reflection) * c_max / (2.0 * w) if w > 0 else 0.0)
            for s, w in widths.items()
        }
        return cls(float(omega), tuple(box), dict(widths), smax, degree)

    def _ramp(self, t, side):
        w = self.widths.get(side, 0.0)
        if w <= 0:
            return np.zeros_like(t)
        return self.sigma_max[side] * np.clip(t / w, 0.0, None) ** self.degree

    def sigma_x(self, x):
        x = np.asarray(x, dtype=float)
        x0, x1 = self.box[0], self.box[1]
        return self._ramp(x0 - x, "left") + self._ramp(x - x1, "right")

    def sigma_z(self, z):
        z = np.asarray(z, dtype=float)
        z0, z1 = self.box[2], self.box[3]
        return self._ramp(z0 - z, "bottom") + self._ramp(z - z1, "top")

    def stretch_x(self, x):
        return 1.0 + 1j * self.sigma_x(x) / self.omega

    def stretch_z(self, z):
        return 1.0 + 1j * self.sigma_z(z) / self.omega


def _physical_box(mesh):
    p = mesh.pml
    return (
        float(mesh.xs[p["left"]]),
        float(mesh.xs[mesh.nx - 1 - p["right"]]),
        float(mesh.zs[p["bottom"]]),
        float(mesh.zs[mesh.nz - 1 - p["top"]]),
    )


@dataclass(frozen=True)
class NodalSource:
    """Source given as a P1 function by its nodal coefficients."""

    coeffs: np.ndarray


def point_source(mesh, location, power=2):
    """Discrete delta at the node nearest ``location``.

    The hat function of that node scaled by ``h**-power``; with the default
    power 2 the discrete delta integrates to one on a uniform mesh, and its
    P1 load vector is the mass-matrix column divided by ``h**2``.
    """
    x, z = location
    ix = int(np.argmin(np.abs(mesh.xs - x)))
    iz = int(np.argmin(np.abs(mesh.zs - z)))
    c = np.zeros(mesh.num_nodes)
    c[iz * mesh.nx + ix] = mesh.h ** (-power)
    return NodalSource(c)


@dataclass(frozen=True)
class BasisDescriptor:
    """Degrees of freedom per node and the plane-wave factor of each.

    Dof ``offsets[j] + l`` belongs to node ``j`` and direction ``l``;
    ``wavevectors[j, l] = k_j d_{j,l}`` (zero for the P1 basis).
    """

    kind: str
    counts: np.ndarray
    wavevectors: np.ndarray
    offsets: np.ndarray

    @property
    def num_dofs(self):
        return int(self.offsets[-1])

    @property
    def nmax(self):
        return self.wavevectors.shape[1]

    @property
    def dof_node(self):
        return np.repeat(np.arange(self.counts.size), self.counts)

    @property
    def dof_wavevector(self):
        mask = np.arange(self.nmax)[None, :] < self.counts[:, None]
        return self.wavevectors[mask]

    def nodal_values(self, coeffs, nodes):
        """``u(x_j) = sum_l v_{j,l} exp(i k_j d_{j,l} . x_j)``."""
        node = self.dof_node
        phase = np.exp(1j * np.einsum("md,md->m", self.dof_wavevector, nodes[node]))
        return np.bincount(node, weights=(coeffs * phase).real, minlength=self.counts.size) + 1j * np.bincount(
            node, weights=(coeffs * phase).imag, minlength=self.counts.size
        )


def make_basis(mesh, omega, speed, rays=None):
    n = mesh.num_nodes
    if rays is None:
        counts = np.ones(n, dtype=np.int64)
        wave = np.zeros((n, 1, 2))
        kind = "p1"
    else:
        dirs = np.asarray(rays.directions(), dtype=float)
        counts = np.asarray(rays.counts, dtype=np.int64)
        if dirs.shape[0] != n or counts.shape[0] != n:
            raise ValueError("ray field does not match the mesh")
        if np.any(counts < 1):
            raise ValueError("every node needs at least one ray direction")
        valid = np.arange(dirs.shape[1])[None, :] < counts[:, None]
        standard = getattr(rays, "standard", None)
        if standard is not None:
            valid &= ~np.asarray(standard, dtype=bool)[:, None]
        norms = np.linalg.norm(dirs, axis=2)
        if np.any(valid & (np.abs(norms - 1.0) > 1e-8)):
            raise ValueError("ray directions must be unit vectors (zero vectors are not allowed)")
        nodes = mesh.nodes
        k = omega / as_speed(speed)(nodes[:, 0], nodes[:, 1])
        wave = np.where(valid[..., None], dirs * k[:, None, None], 0.0)
        kind = "ray"
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return BasisDescriptor(kind, counts, wave, offsets)


@dataclass
class Helmholtz:
    """Everything needed to assemble one discrete Helmholtz problem.

    ``boundary`` maps each side of the mesh to ``"impedance"``,
    ``"dirichlet"`` or ``"neumann"``. ``boundary_data`` is
    ``g(x, z, nx, nz)`` on impedance sides.
    """

    mesh: Mesh
    omega: float
    speed: Callable | float = 1.0
    beta: float = 1.0
    boundary: dict = field(default_factory=lambda: dict.fromkeys(SIDES, "impedance"))
    pml: PMLProfile | None = None
    source: Callable | NodalSource | None = None
    boundary_data: Callable | None = None
    rays: object = None
    quad_order: int | None = None

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class SparseSystem:
    """Assembled matrix, load vector and the layout of the unknowns.

    ``row_blocks[r]:row_blocks[r + 1]`` are the dofs of depth row ``r``.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    basis: BasisDescriptor
    row_blocks: np.ndarray
    problem: Helmholtz

    @property
    def dim(self):
        return self.matrix.shape[0]


_REF_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def _lambda(points):
    return np.column_stack([1.0 - points[:, 0] - points[:, 1], points[:, 0], points[:, 1]])


def _source_values(source, xq, zq, tri_nodes, lam):
    if source is None:
        return None
    if isinstance(source, NodalSource):
        c = np.asarray(source.coeffs)[tri_nodes]
        return np.einsum("qa,ea->eq", lam, c)
    return np.asarray(source(xq, zq), dtype=complex)


def _element_dofs(basis, tri_nodes):
    e = tri_nodes.shape[0]
    nmax = basis.nmax
    l = np.arange(nmax)
    dofs = basis.offsets[tri_nodes][:, :, None] + l[None, None, :]
    valid = l[None, None, :] < basis.counts[tri_nodes][:, :, None]
    dofs = np.where(valid, dofs, -1)
    return dofs.reshape(e, 3 * nmax), valid.reshape(e, 3 * nmax)


def _volume_terms(problem, basis, tri, nodes, order, rows, cols, vals, rhs):
    speed = as_speed(problem.speed)
    omega = problem.omega
    qp, qw = reference_quadrature(order)
    lam = _lambda(qp)
    nq = qw.size
    nmax = basis.nmax
    d = 3 * nmax
    chunk = max(256, int(3e6 // (d * nq)))
    pml = problem.pml
    for start in range(0, tri.shape[0], chunk):
        t = tri[start:start + chunk]
        p = nodes[t]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv_t = np.linalg.inv(jac).transpose(0, 2, 1)
        grad = np.einsum("eij,aj->eai", inv_t, _REF_GRAD)
        xq = np.einsum("qa,ea->eq", lam, p[:, :, 0])
        zq = np.einsum("qa,ea->eq", lam, p[:, :, 1])
        k2 = (omega / speed(xq, zq)) ** 2
        if pml is not None:
            sx = pml.stretch_x(xq)
            sz = pml.stretch_z(zq)
            ax, az, mass = sz / sx, sx / sz, k2 * sx * sz
        else:
            sx = sz = 1.0
            ax = az = np.ones_like(k2)
            mass = k2
        wq = qw[None, :] * np.abs(det)[:, None]
        kv = basis.wavevectors[t]
        if basis.kind == "p1":
            e_phase = np.ones((t.shape[0], 3, 1, nq), dtype=complex)
        else:
            e_phase = np.exp(1j * (kv[..., 0, None] * xq[:, None, None, :] + kv[..., 1, None] * zq[:, None, None, :]))
        lam_e = lam.T[None, :, None, :]
        psi = lam_e * e_phase
        dpx = (grad[:, :, 0, None, None] + 1j * kv[..., 0, None] * lam_e) * e_phase
        dpz = (grad[:, :, 1, None, None] + 1j * kv[..., 1, None] * lam_e) * e_phase
        n = t.shape[0]
        psi = psi.reshape(n, d, nq)
        dpx = dpx.reshape(n, d, nq)
        dpz = dpz.reshape(n, d, nq)
        dofs, valid = _element_dofs(basis, t)
        psi = np.where(valid[..., None], psi, 0.0)
        dpx = np.where(valid[..., None], dpx, 0.0)
        dpz = np.where(valid[..., None], dpz, 0.0)
        ke = (
            np.einsum("eq,eaq,ebq->eab", wq * ax, dpx.conj(), dpx)
            + np.einsum("eq,eaq,ebq->eab", wq * az, dpz.conj(), dpz)
            - np.einsum("eq,eaq,ebq->eab", wq * mass, psi.conj(), psi)
        )
        r = np.broadcast_to(dofs[:, :, None], ke.shape)
        c = np.broadcast_to(dofs[:, None, :], ke.shape)
        keep = (r >= 0) & (c >= 0)
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(ke[keep])
        f = _source_values(problem.source, xq, zq, t, lam)
        if f is not None and np.any(f != 0):
            fw = wq * f * (sx * sz if pml is not None else 1.0)
            fe = np.einsum("eq,eaq->ea", fw, psi.conj())
            np.add.at(rhs, dofs[valid], fe[valid])


def _side_nodes(mesh, side):
    nx, nz = mesh.nx, mesh.nz
    if side == "bottom":
        return np.arange(nx)
    if side == "top":
        return (nz - 1) * nx + np.arange(nx)
    if side == "left":
        return np.arange(nz) * nx
    return np.arange(nz) * nx + nx - 1


def _boundary_terms(problem, basis, nodes, order, rows, cols, vals, rhs):
    speed = as_speed(problem.speed)
    omega = problem.omega
    mesh = problem.mesh
    tq, tw = interval_quadrature(order)
    phi = np.column_stack([1.0 - tq, tq])
    nmax = basis.nmax
    for side in SIDES:
        if problem.boundary.get(side) != "impedance":
            continue
        ids = _side_nodes(mesh, side)
        edges = np.column_stack([ids[:-1], ids[1:]])
        p = nodes[edges]
        length = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        xq = p[:, 0, 0, None] + tq[None, :] * (p[:, 1, 0] - p[:, 0, 0])[:, None]
        zq = p[:, 0, 1, None] + tq[None, :] * (p[:, 1, 1] - p[:, 0, 1])[:, None]
        wq = tw[None, :] * length[:, None]
        if problem.pml is not None:
            stretch = problem.pml.stretch_z(zq) if side in ("left", "right") else problem.pml.stretch_x(xq)
            wq = wq * stretch
        kv = basis.wavevectors[edges]
        e_phase = np.exp(1j * (kv[..., 0, None] * xq[:, None, None, :] + kv[..., 1, None] * zq[:, None, None, :]))
        psi = (phi.T[None, :, None, :] * e_phase).reshape(edges.shape[0], 2 * nmax, tq.size)
        l = np.arange(nmax)
        dofs = (basis.offsets[edges][:, :, None] + l).reshape(edges.shape[0], 2 * nmax)
        valid = (l[None, None, :] < basis.counts[edges][:, :, None]).reshape(edges.shape[0], 2 * nmax)
        psi = np.where(valid[..., None], psi, 0.0)
        kq = omega / speed(xq, zq)
        be = 1j * problem.beta * np.einsum("eq,eaq,ebq->eab", wq * kq, psi.conj(), psi)
        r = np.broadcast_to(dofs[:, :, None], be.shape)
        c = np.broadcast_to(dofs[:, None, :], be.shape)
        keep = np.broadcast_to(valid[:, :, None] & valid[:, None, :], be.shape)
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(be[keep])
        if problem.boundary_data is not None:
            nx_, nz_ = NORMALS[side]
            g = np.asarray(problem.boundary_data(xq, zq, np.full_like(xq, nx_), np.full_like(xq, nz_)), dtype=complex)
            ge = np.einsum("eq,eaq->ea", wq * g, psi.conj())
            np.add.at(rhs, dofs[valid], ge[valid])


def dirichlet_dofs(problem, basis):
    mesh = problem.mesh
    ids = [_side_nodes(mesh, s) for s in SIDES if problem.boundary.get(s) == "dirichlet"]
    if not ids:
        return np.zeros(0, dtype=np.int64)
    nodes = np.unique(np.concatenate(ids))
    return np.concatenate([np.arange(basis.offsets[j], basis.offsets[j + 1]) for j in nodes])


def assemble(problem, basis=None):
    """Assemble ``problem`` into a :class:`SparseSystem`."""
    mesh = problem.mesh
    if basis is None:
        basis = make_basis(mesh, problem.omega, problem.speed, problem.rays)
    order = problem.quad_order or (DEFAULT_ORDER_RAY if basis.kind == "ray" else DEFAULT_ORDER_P1)
    nodes = mesh.nodes
    tri = mesh.triangles
    ndof = basis.num_dofs
    rows, cols, vals = [], [], []
    rhs = np.zeros(ndof, dtype=complex)
    _volume_terms(problem, basis, tri, nodes, order, rows, cols, vals, rhs)
    _boundary_terms(problem, basis, nodes, order, rows, cols, vals, rhs)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    fixed = dirichlet_dofs(problem, basis)
    if fixed.size:
        free = np.ones(ndof, dtype=bool)
        free[fixed] = False
        keep = free[r] & free[c]
        r, c, v = r[keep], c[keep], v[keep]
        r = np.concatenate([r, fixed])
        c = np.concatenate([c, fixed])
        v = np.concatenate([v, np.ones(fixed.size, dtype=complex)])
        rhs[fixed] = 0.0
    matrix = sp.coo_matrix((v, (r, c)), shape=(ndof, ndof)).tocsr()
    matrix.sum_duplicates()
    row_blocks = basis.offsets[np.arange(mesh.nz + 1) * mesh.nx]
    return SparseSystem(matrix, rhs, basis, row_blocks, problem)


def assemble_sfem(mesh, omega, speed, beta=1.0, source=None, boundary_data=None, quad_order=None):
    """P1 system with impedance conditions on every side."""
    prob = Helmholtz(mesh, omega, speed, beta, source=source, boundary_data=boundary_data, quad_order=quad_order)
    return assemble(prob)


def assemble_rayfem(mesh, omega, speed, beta, source, boundary_data, rays, quad_order=None):
    """Ray-enriched system with impedance conditions on every side."""
    prob = Helmholtz(
        mesh, omega, speed, beta, source=source, boundary_data=boundary_data, rays=rays, quad_order=quad_order
    )
    return assemble(prob)


def assemble_pml(mesh, omega, speed, source, profile, rays=None, quad_order=None):
    """Stretched-coordinate system on a PML-extended mesh, zero Dirichlet outside."""
    prob = Helmholtz(
        mesh,
        omega,
        speed,
        beta=0.0,
        boundary=dict.fromkeys(SIDES, "dirichlet"),
        pml=profile,
        source=source,
        rays=rays,
        quad_order=quad_order,
    )
    return assemble(prob)
