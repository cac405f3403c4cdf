"""Per-node ray direction fields: learning on a coarse grid, interpolation, exact rays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import build_coarse_map
from .nmla import NMLAConfig, NMLAError, l_alpha, min_radius, nmla, sampling_plan

TWO_PI = 2.0 * np.pi
LEARNED, INTERPOLATED, EXACT_RADIAL, FALLBACK, STANDARD = 0, 1, 2, 3, 4
PROVENANCE = {
    LEARNED: "learned",
    INTERPOLATED: "interpolated",
    EXACT_RADIAL: "exact-radial",
    FALLBACK: "fallback",
    STANDARD: "standard",
}
MATCH_CUT = np.pi / 4

__all__ = [
    "RayField",
    "ray_learning",
    "learn_coarse",
    "interpolate_directions",
    "exact_radial_rays",
    "wrap_angle",
    "LEARNED",
    "INTERPOLATED",
    "EXACT_RADIAL",
    "FALLBACK",
    "STANDARD",
]


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, TWO_PI) - np.pi
    return np.where(w == -np.pi, np.pi, w)


@dataclass(frozen=True)
class RayField:
    """Padded angle table ``angles[j, :counts[j]]`` (radians, in [0, 2pi)).

    Nodes tagged ``STANDARD`` carry a single plain P1 function (zero wave
    vector) whatever their stored angle.
    """

    angles: np.ndarray
    counts: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        if np.any(self.counts < 1):
            raise ValueError("every node needs at least one direction")

    @classmethod
    def from_lists(cls, lists, provenance=None):
        n = len(lists)
        counts = np.array([len(a) for a in lists], dtype=np.int64)
        width = max(1, int(counts.max()) if n else 1)
        angles = np.full((n, width), np.nan)
        for j, a in enumerate(lists):
            angles[j, : len(a)] = np.mod(a, TWO_PI)
        prov = np.full(n, LEARNED, dtype=np.int8) if provenance is None else np.asarray(provenance, dtype=np.int8)
        return cls(angles, counts, prov)

    @classmethod
    def from_vectors(cls, vectors, provenance=LEARNED):
        """One direction per node from an ``(N, 2)`` array of (not necessarily unit) vectors."""
        v = np.asarray(vectors, dtype=float)
        if np.any(np.hypot(v[:, 0], v[:, 1]) == 0):
            raise ValueError("zero direction vector")
        a = np.mod(np.arctan2(v[:, 1], v[:, 0]), TWO_PI)[:, None]
        return cls(a, np.ones(v.shape[0], dtype=np.int64), np.full(v.shape[0], provenance, dtype=np.int8))

    @property
    def num_nodes(self):
        return self.counts.size

    def node_angles(self, j):
        return self.angles[j, : self.counts[j]]

    def directions(self):
        a = np.nan_to_num(self.angles, nan=0.0)
        d = np.stack([np.cos(a), np.sin(a)], axis=-1)
        valid = np.arange(self.angles.shape[1])[None, :] < self.counts[:, None]
        valid &= (self.provenance != STANDARD)[:, None]
        return np.where(valid[..., None], d, 0.0)

    @property
    def standard(self):
        return self.provenance == STANDARD

    def write(self, path):
        """One line per node: provenance tag, then its angles."""
        with open(path, "w") as fh:
            for j in range(self.num_nodes):
                vals = " ".join(f"{a:.15g}" for a in self.node_angles(j))
                fh.write(f"{PROVENANCE[int(self.provenance[j])]} {vals}\n")


def _merge(angles, tol):
    """Drop angles within ``tol`` of an earlier one."""
    out = []
    for a in angles:
        if all(abs(wrap_angle(a - b)) > tol for b in out):
            out.append(a)
    return out


def _match(sets):
    """Greedy nearest-angle grouping across vertices, cut at ``MATCH_CUT``.

    Returns a list of groups, each a dict vertex -> angle.
    """
    groups = []
    for v, angs in enumerate(sets):
        free = list(range(len(angs)))
        taken = set()
        pairs = []
        for gi, g in enumerate(groups):
            ref = next(iter(g.values()))
            for ai in free:
                d = abs(wrap_angle(angs[ai] - ref))
                if d < MATCH_CUT:
                    pairs.append((d, gi, ai))
        pairs.sort()
        used_groups = set()
        for d, gi, ai in pairs:
            if gi in used_groups or ai in taken:
                continue
            groups[gi][v] = angs[ai]
            used_groups.add(gi)
            taken.add(ai)
        for ai in free:
            if ai not in taken:
                groups.append({v: angs[ai]})
    return groups


def interpolate_directions(cmap, coarse_angles, coarse_provenance=None, merge_tol=None):
    """Barycentric angle interpolation of coarse direction sets onto the fine nodes.

    ``coarse_angles`` is a list of angle arrays, one per coarse node, all
    nonempty. Directions matched across the supporting coarse vertices are
    interpolated after unwrapping; unmatched ones are carried over as they are.
    """
    nfine = cmap.fine.num_nodes
    if len(coarse_angles) != cmap.coarse.num_nodes:
        raise ValueError("one direction set per coarse node is required")
    if any(len(a) == 0 for a in coarse_angles):
        raise ValueError("coarse direction sets must be nonempty")
    cprov = np.full(len(coarse_angles), LEARNED, dtype=np.int8) if coarse_provenance is None else coarse_provenance
    tol = 1e-6 if merge_tol is None else merge_tol
    verts, w = cmap.fine_vertices, cmap.fine_weights
    support = w > 0
    lists = [None] * nfine
    prov = np.empty(nfine, dtype=np.int8)
    # nodes sharing a vertex triple and support pattern share the matching
    key = np.concatenate([verts, support.astype(np.int64)], axis=1)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(uniq.shape[0] + 1))
    for u in range(uniq.shape[0]):
        nodes = order[bounds[u]:bounds[u + 1]]
        vtx = uniq[u, :3]
        sup = np.flatnonzero(uniq[u, 3:])
        groups = _match([np.asarray(coarse_angles[vtx[i]], dtype=float) for i in sup])
        ws = w[nodes][:, sup]
        cols = []
        for g in groups:
            if len(g) == len(sup):
                ref = g[0]
                unwrapped = np.array([ref + wrap_angle(g[i] - ref) for i in range(len(sup))])
                cols.append(ws @ unwrapped)
            else:
                cols.extend(np.full(nodes.size, a) for a in g.values())
        table = np.mod(np.column_stack(cols), TWO_PI)
        if len(sup) == 1:
            p = cprov[vtx[sup[0]]]
        else:
            p = FALLBACK if np.all(cprov[vtx[sup]] == FALLBACK) else INTERPOLATED
        prov[nodes] = p
        for row, j in enumerate(nodes):
            lists[j] = _merge(table[row], tol)
    return RayField.from_lists(lists, prov)


def _admissible_center(x0, r, domain, margin):
    lo = np.array([domain[0], domain[2]]) + r + margin
    hi = np.array([domain[1], domain[3]]) - r - margin
    if np.any(lo > hi):
        raise NMLAError("sampling circle does not fit in the field's mesh")
    return np.clip(x0, lo, hi)


def _needs_shift(x0, r, domain, margin=1e-9):
    room = min(x0[0] - domain[0], domain[1] - x0[0], x0[1] - domain[2], domain[3] - x0[1]) - margin
    return r > room


def _fit_radius(x0, r, r_min, domain, margin):
    """Shrink ``r`` (not below ``r_min``) so the circle at ``x0`` fits in ``domain``."""
    room = min(x0[0] - domain[0], domain[1] - x0[0], x0[1] - domain[2], domain[3] - x0[1]) - margin
    return max(min(r, room), min(r, r_min))


def learn_coarse(points, field, omega, c, config=NMLAConfig(), bounds=None, previous=None):
    """NMLA at each point; circles that would leave ``bounds`` shrink, then shift inward.

    ``bounds`` defaults to the field's mesh. With ``previous`` (one angle
    list per point), points whose circle would have to shift keep those
    directions. Returns ``(angle_lists, provenance, shifted)`` where failed
    points were filled from the nearest successful one.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    domain = field.mesh.domain if bounds is None else bounds
    lists, ok, shifted = [], np.zeros(len(pts), dtype=bool), 0
    for i, x0 in enumerate(pts):
        cval = float(c(x0[0], x0[1])) if callable(c) else float(c)
        r, _ = sampling_plan(omega, cval, config)
        r = _fit_radius(x0, r, min_radius(omega, cval, config), domain, 1e-9)
        if previous is not None and _needs_shift(x0, r, domain):
            lists.append(list(previous[i]))
            ok[i] = True
            continue
        try:
            center = _admissible_center(x0, r, domain, 1e-9)
            shifted += bool(np.any(center != x0))
            est = nmla(center, field, omega, c, config, radius=r)
            angs = list(est.angles)
        except NMLAError:
            angs = []
        lists.append(angs)
        ok[i] = len(angs) > 0
    prov = np.where(ok, LEARNED, FALLBACK).astype(np.int8)
    good = np.flatnonzero(ok)
    for i in np.flatnonzero(~ok):
        if good.size:
            nearest = good[np.argmin(np.linalg.norm(pts[good] - pts[i], axis=1))]
            lists[i] = list(lists[nearest])
        else:
            lists[i] = [0.0]
    return lists, prov, shifted


def ray_learning(omega, fine_mesh, c, field, config=NMLAConfig(), hc=None, bounds=None, previous=None):
    """Learn directions at the coarse nodes of ``fine_mesh`` and interpolate to every fine node.

    ``field`` may live on a larger mesh than ``fine_mesh`` (e.g. a probe solved
    on an enlarged domain); it is only sampled, with circles kept in ``bounds``.
    ``previous`` is a ray field on ``fine_mesh`` whose directions are kept
    where the sampling circle would have to leave its node.
    """
    cmap = build_coarse_map(fine_mesh, hc)
    pts = cmap.coarse.nodes
    prev = None
    if previous is not None:
        prev = [previous.angles[j, : previous.counts[j]] for j in cmap.coarse_to_fine]
    lists, prov, _ = learn_coarse(pts, field, omega, c, config, bounds, prev)
    cmid = float(c(0.0, 0.0)) if callable(c) else float(c)
    r, _ = sampling_plan(omega, cmid, config)
    tol = TWO_PI / (2 * l_alpha(omega / cmid * r) + 1)
    return interpolate_directions(cmap, lists, prov, merge_tol=tol)


def exact_radial_rays(rays, nodes, source, radius, standard_radius=0.0):
    """Replace directions within ``radius`` of ``source`` by the outgoing radial one.

    Nodes within ``standard_radius`` (and always the node at the source
    itself) fall back to the plain P1 basis, which has no direction.
    """
    if radius <= 0:
        return rays
    d = np.asarray(nodes, dtype=float) - np.asarray(source, dtype=float)
    dist = np.hypot(d[:, 0], d[:, 1])
    near = (dist <= radius) & (dist > standard_radius)
    plain = dist <= max(standard_radius, 0.0)
    if not np.any(near | plain):
        return rays
    angles = rays.angles.copy()
    counts = rays.counts.copy()
    prov = rays.provenance.copy()
    angles[near] = np.nan
    angles[near, 0] = np.mod(np.arctan2(d[near, 1], d[near, 0]), TWO_PI)
    counts[near] = 1
    prov[near] = EXACT_RADIAL
    angles[plain] = np.nan
    angles[plain, 0] = 0.0
    counts[plain] = 1
    prov[plain] = STANDARD
    return RayField(angles, counts, prov)
