"""Discrete wave fields: a coefficient vector tied to a mesh and a basis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import BasisDescriptor
from .mesh import Mesh

__all__ = ["WaveField"]


@dataclass
class WaveField:
    """``u_h = sum_m v_m psi_m`` with evaluation of ``u_h`` and its gradient."""

    mesh: Mesh
    basis: BasisDescriptor
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (self.basis.num_dofs,):
            raise ValueError("coefficient vector does not match the basis")

    @classmethod
    def from_nodal(cls, mesh, values):
        """P1 field with the given nodal values."""
        from .fem import make_basis

        return cls(mesh, make_basis(mesh, 0.0, 1.0), values)

    def nodal_values(self):
        if self.basis.kind == "p1":
            return self.coeffs.copy()
        return self.basis.nodal_values(self.coeffs, self.mesh.nodes)

    def _gather(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tri, lam = self.mesh.locate(pts)
        verts = self.mesh.triangles[tri]
        b = self.basis
        l = np.arange(b.nmax)
        valid = l[None, None, :] < b.counts[verts][:, :, None]
        dofs = np.where(valid, b.offsets[verts][:, :, None] + l, 0)
        v = np.where(valid, self.coeffs[dofs], 0.0)
        kv = b.wavevectors[verts]
        phase = np.exp(1j * np.einsum("nalk,nk->nal", kv, pts))
        return pts, tri, verts, lam, v, kv, phase

    def evaluate(self, points):
        """``u_h`` at each point (shape ``(n, 2)``)."""
        _, _, _, lam, v, _, phase = self._gather(points)
        return np.einsum("na,nal->n", lam, v * phase)

    def evaluate_with_gradient(self, points):
        """``(u_h, grad u_h)``; the P1 part of the gradient is taken on the containing triangle."""
        pts, _, verts, lam, v, kv, phase = self._gather(points)
        p = self.mesh.nodes[verts]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        grad_phi = np.einsum("nij,aj->nai", np.linalg.inv(jac).transpose(0, 2, 1), ref)
        vp = v * phase
        u = np.einsum("na,nal->n", lam, vp)
        g = np.einsum("nak,nal->nk", grad_phi, vp) + 1j * np.einsum("na,nal,nalk->nk", lam, vp, kv)
        return u, g

    def gradient(self, points):
        return self.evaluate_with_gradient(points)[1]
