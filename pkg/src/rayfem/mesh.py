"""Structured triangulations of axis-aligned rectangles.

Nodes are numbered row by row (constant depth ``z``), ``index = iz * nx + ix``,
so any two nodes sharing a triangle sit in the same or adjacent depth rows.
Every square cell is cut along its bottom-left to top-right diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INTERIOR, BOUNDARY, PML = 0, 1, 2
SIDES = ("left", "right", "bottom", "top")
MAX_NODES = 20_000_000

__all__ = [
    "Mesh",
    "CoarseFineMap",
    "MeshError",
    "build_mesh",
    "extend_with_pml",
    "build_coarse_map",
    "write_mesh",
    "INTERIOR",
    "BOUNDARY",
    "PML",
]


class MeshError(ValueError):
    pass


def _cell_triangles(nx, nz):
    ix, iz = np.meshgrid(np.arange(nx - 1), np.arange(nz - 1))
    n00 = (iz * nx + ix).ravel()
    n10 = n00 + 1
    n01 = n00 + nx
    n11 = n01 + 1
    lower = np.stack([n00, n10, n11], axis=1)
    upper = np.stack([n00, n11, n01], axis=1)
    # interleave so the two halves of a cell are adjacent in memory
    tri = np.empty((2 * lower.shape[0], 3), dtype=np.int64)
    tri[0::2] = lower
    tri[1::2] = upper
    return tri


@dataclass(frozen=True)
class Mesh:
    """Rectilinear triangulation; ``xs``/``zs`` are the grid lines.

    ``pml`` counts the absorbing-layer node columns/rows added on each side,
    ``physical`` is the rectangle before any extension.
    """

    xs: np.ndarray
    zs: np.ndarray
    h: float
    physical: tuple
    pml: dict = field(default_factory=lambda: dict.fromkeys(SIDES, 0))

    @property
    def nx(self):
        return self.xs.size

    @property
    def nz(self):
        return self.zs.size

    @property
    def num_nodes(self):
        return self.nx * self.nz

    @property
    def domain(self):
        return (float(self.xs[0]), float(self.xs[-1]), float(self.zs[0]), float(self.zs[-1]))

    @property
    def nodes(self):
        X, Z = np.meshgrid(self.xs, self.zs)
        return np.column_stack([X.ravel(), Z.ravel()])

    @property
    def triangles(self):
        return _cell_triangles(self.nx, self.nz)

    @property
    def tags(self):
        t = np.full((self.nz, self.nx), INTERIOR, dtype=np.int8)
        p = self.pml
        b, tp = p["bottom"], self.nz - 1 - p["top"]
        lf, rt = p["left"], self.nx - 1 - p["right"]
        t[[b, tp], lf:rt + 1] = BOUNDARY
        t[b:tp + 1, [lf, rt]] = BOUNDARY
        if p["bottom"]:
            t[: p["bottom"], :] = PML
        if p["top"]:
            t[self.nz - p["top"]:, :] = PML
        if p["left"]:
            t[:, : p["left"]] = PML
        if p["right"]:
            t[:, self.nx - p["right"]:] = PML
        return t.ravel()

    @property
    def physical_nodes(self):
        """Indices of the nodes inside the un-extended rectangle."""
        p = self.pml
        ix = np.arange(p["left"], self.nx - p["right"])
        iz = np.arange(p["bottom"], self.nz - p["top"])
        return (iz[:, None] * self.nx + ix[None, :]).ravel()

    def row_slice(self, iz):
        return slice(iz * self.nx, (iz + 1) * self.nx)

    def triangle_areas(self):
        p = self.nodes[self.triangles]
        a = p[:, 1] - p[:, 0]
        b = p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def locate(self, points):
        """Containing triangle and barycentric weights for each point.

        Points outside the mesh raise ``MeshError``.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, z = pts[:, 0], pts[:, 1]
        tol = 1e-12 * max(1.0, abs(self.xs[-1]), abs(self.zs[-1]))
        if (np.any(x < self.xs[0] - tol) or np.any(x > self.xs[-1] + tol)
                or np.any(z < self.zs[0] - tol) or np.any(z > self.zs[-1] + tol)):
            raise MeshError("point outside mesh")
        cx = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, self.nx - 2)
        cz = np.clip(np.searchsorted(self.zs, z, side="right") - 1, 0, self.nz - 2)
        fx = np.clip((x - self.xs[cx]) / (self.xs[cx + 1] - self.xs[cx]), 0.0, 1.0)
        fz = np.clip((z - self.zs[cz]) / (self.zs[cz + 1] - self.zs[cz]), 0.0, 1.0)
        cell = cz * (self.nx - 1) + cx
        lower = fx >= fz
        tri = 2 * cell + np.where(lower, 0, 1)
        w = np.where(
            lower[:, None],
            np.column_stack([1.0 - fx, fx - fz, fz]),
            np.column_stack([1.0 - fz, fx, fz - fx]),
        )
        return tri, w


def build_mesh(domain, h, max_nodes=MAX_NODES):
    """Uniform triangulation of ``domain = (xmin, xmax, zmin, zmax)``."""
    if h <= 0:
        raise MeshError("mesh size must be positive")
    xmin, xmax, zmin, zmax = map(float, domain)
    counts = []
    for lo, hi in ((xmin, xmax), (zmin, zmax)):
        cells = (hi - lo) / h
        n = int(round(cells))
        if n < 1 or abs(cells - n) > 1e-6 * max(1.0, cells):
            raise MeshError(f"h={h} does not divide the edge [{lo}, {hi}]")
        counts.append(n + 1)
    nx, nz = counts
    if nx * nz > max_nodes:
        raise MeshError(f"{nx * nz} nodes exceeds the cap of {max_nodes}")
    xs = xmin + h * np.arange(nx)
    zs = zmin + h * np.arange(nz)
    xs[-1], zs[-1] = xmax, zmax
    return Mesh(xs, zs, float(h), (xmin, xmax, zmin, zmax))


def extend_with_pml(mesh, width, sides=SIDES):
    """Grow ``mesh`` by ``width`` (a multiple of h) on the given sides."""
    npml = int(round(width / mesh.h))
    if abs(npml * mesh.h - width) > 1e-9 * max(1.0, width):
        raise MeshError("PML width must be an integer multiple of h")
    if npml == 0:
        return mesh
    h = mesh.h
    add = {s: (npml if s in sides else 0) for s in SIDES}
    xs = np.concatenate([
        mesh.xs[0] - h * np.arange(add["left"], 0, -1),
        mesh.xs,
        mesh.xs[-1] + h * np.arange(1, add["right"] + 1),
    ])
    zs = np.concatenate([
        mesh.zs[0] - h * np.arange(add["bottom"], 0, -1),
        mesh.zs,
        mesh.zs[-1] + h * np.arange(1, add["top"] + 1),
    ])
    pml = {s: mesh.pml[s] + add[s] for s in SIDES}
    return Mesh(xs, zs, h, mesh.physical, pml)


@dataclass(frozen=True)
class CoarseFineMap:
    """Coarse grid whose nodes are a subset of the fine nodes.

    ``coarse_to_fine[c]`` is the fine index of coarse node ``c``;
    ``fine_vertices[j]`` the three coarse nodes of the coarse triangle
    holding fine node ``j`` and ``fine_weights[j]`` its barycentric weights.
    """

    fine: Mesh
    coarse: Mesh
    stride: int
    coarse_to_fine: np.ndarray
    fine_vertices: np.ndarray
    fine_weights: np.ndarray

    def interpolate(self, coarse_values):
        """P1 interpolation of coarse nodal values onto the fine nodes."""
        v = np.asarray(coarse_values)
        return np.einsum("jk,jk...->j...", self.fine_weights, v[self.fine_vertices])


def coarse_stride(h, hc=None):
    """Fine cells per coarse cell; default ``round(sqrt(h) / h)``."""
    target = np.sqrt(h) if hc is None else hc
    if target < h * (1 - 1e-9):
        raise MeshError("coarse mesh size must be >= fine mesh size")
    return max(1, int(round(target / h)))


def _subsample(n, s):
    idx = np.arange(0, n, s)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def build_coarse_map(fine, hc=None):
    """Down-sample ``fine`` by an integer stride close to ``hc`` (default sqrt(h))."""
    s = coarse_stride(fine.h, hc)
    ix = _subsample(fine.nx, s)
    iz = _subsample(fine.nz, s)
    coarse = Mesh(fine.xs[ix], fine.zs[iz], s * fine.h, fine.physical, dict(fine.pml))
    c2f = (iz[:, None] * fine.nx + ix[None, :]).ravel()
    tri, w = coarse.locate(fine.nodes)
    verts = coarse.triangles[tri]
    # snap round-off so coincident nodes map exactly
    w = np.where(np.abs(w) < 1e-13, 0.0, w)
    w = np.where(np.abs(w - 1.0) < 1e-13, 1.0, w)
    w /= w.sum(axis=1, keepdims=True)
    return CoarseFineMap(fine, coarse, s, c2f, verts, w)


def write_mesh(mesh, path):
    """Plain-text dump: header, node coordinates, triangle vertex triples."""
    nodes, tri = mesh.nodes, mesh.triangles
    with open(path, "w") as fh:
        fh.write(f"{mesh.nx} {mesh.nz} {mesh.h!r} " + " ".join(repr(v) for v in mesh.domain) + "\n")
        fh.write(f"{nodes.shape[0]}\n")
        np.savetxt(fh, nodes, fmt="%.17g")
        fh.write(f"{tri.shape[0]}\n")
        np.savetxt(fh, tri, fmt="%d")
