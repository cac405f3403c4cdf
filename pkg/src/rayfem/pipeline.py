"""End-to-end solvers: S-FEM, ray-FEM, and the iterative ray-FEM loop with its error metrics."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .fem import as_speed, assemble, make_basis
from .field import WaveField
from .linsolve.direct import direct_solve
from .linsolve.gmres import GMRESResult, KrylovConfig, gmres_solve
from .linsolve.polarized import PolarizedTraces, default_interface_pml, default_layer_rows
from .nmla import NMLAConfig, sampling_plan
from .quadrature import reference_quadrature
from .rays import RayField, exact_radial_rays, ray_learning, wrap_angle
from .scenarios import ExteriorSources, InteriorSource

log = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "PipelineConfig",
    "ExperimentResult",
    "SolveInfo",
    "mesh_size",
    "probe_frequency",
    "solve_system",
    "s_fem_solve",
    "ray_fem_solve",
    "iter_ray_fem",
    "l2_error",
    "l2_difference",
    "angle_error",
    "ray_interpolant",
]


@dataclass(frozen=True)
class SolverConfig:
    """``method`` is ``"direct"`` or ``"polarized"`` (GMRES + layered preconditioner)."""

    method: str = "direct"
    krylov: KrylovConfig = KrylovConfig()
    layer_rows: int | None = None
    interface_pml: int | None = None
    extra_step: bool = True

    def __post_init__(self):
        if self.method not in ("direct", "polarized"):
            raise ValueError(f"unknown solver {self.method!r}")


@dataclass(frozen=True)
class PipelineConfig:
    npw: float = 6.0
    beta: float = 1.0
    probe_scale: float = 1.0
    probe_round: bool = False
    probe_radius: float | None = None
    nmla: NMLAConfig = NMLAConfig()
    nmla_high: NMLAConfig | None = None
    hc: float | None = None
    max_iter: int = 3
    eps: float = 1e-3
    solver: SolverConfig = SolverConfig()
    quad_order: int | None = None
    radial_wavelengths: float = 2.0
    standard_cells: float = 1.0
    exclude_wavelengths: float = 4.0
    exact_rays: bool = False


@dataclass
class SolveInfo:
    iterations: int = 0
    converged: bool = True
    setup_time: float = 0.0
    solve_time: float = 0.0
    history: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    """One row of an experiment table; errors are NaN when not applicable."""

    omega: float
    h: float
    ndof: int = 0
    omega_probe: float = float("nan")
    angle_error_low: float = float("nan")
    angle_error_high: float = float("nan")
    error_abs_low: float = float("nan")
    error_rel_low: float = float("nan")
    error_abs: float = float("nan")
    error_rel: float = float("nan")
    error_abs_exact_rays: float = float("nan")
    error_rel_exact_rays: float = float("nan")
    niter: int = 0
    outer_converged: bool = True
    iterations_probe: int = 0
    iterations_high: int = 0
    timings: dict = field(default_factory=dict)
    status: str = "ok"

    @property
    def frequency(self):
        return self.omega / (2 * np.pi)


def mesh_size(omega, c_min, npw, width=1.0):
    """Largest ``h <= c_min / (omega/2pi * npw)`` dividing ``width``."""
    h = c_min / (omega / (2 * np.pi) * npw)
    cells = math.ceil(width / h - 1e-9)
    return width / cells


def probe_frequency(omega, scale=1.0, rounded=False):
    """``scale * sqrt(omega)``; optionally rounded so ``omega~/2pi`` is a whole number."""
    wt = scale * math.sqrt(omega)
    if rounded:
        wt = 2 * np.pi * max(1, round(wt / (2 * np.pi)))
    return wt


def solve_system(system, solver=SolverConfig(), omega=None, npw=6.0):
    """Solve an assembled system with the configured method."""
    info = SolveInfo()
    if solver.method == "direct":
        t = time.perf_counter()
        x = direct_solve(system)
        info.solve_time = time.perf_counter() - t
        info.iterations = 1
        return x, info
    omega = system.problem.omega if omega is None else omega
    rows = solver.layer_rows or default_layer_rows(npw)
    pml = solver.interface_pml or default_interface_pml(omega)
    t = time.perf_counter()
    pre = PolarizedTraces(system, rows, pml, extra_step=solver.extra_step)
    info.setup_time = time.perf_counter() - t
    A = system.matrix
    t = time.perf_counter()
    res: GMRESResult = gmres_solve(lambda v: A @ v, system.rhs, pre, solver.krylov)
    info.solve_time = time.perf_counter() - t
    info.iterations = res.iterations
    info.converged = res.converged
    info.history = res.history
    if not res.converged:
        log.warning("GMRES stopped after %d iterations at residual %.2e", res.iterations, res.history[-1])
    return res.x, info


def s_fem_solve(problem, solver=SolverConfig(), npw=6.0):
    """Standard P1 solve of ``problem`` (impedance or PML)."""
    if problem.rays is not None:
        problem = replace(problem, rays=None)
    c = as_speed(problem.speed)
    nodes = problem.mesh.nodes
    kmax = problem.omega / float(np.min(c(nodes[:, 0], nodes[:, 1])))
    if kmax**2 * problem.mesh.h > 10:
        log.warning("omega^2 h = %.1f: P1 solution will suffer from pollution", kmax**2 * problem.mesh.h)
    system = assemble(problem)
    x, info = solve_system(system, solver, npw=npw)
    return WaveField(problem.mesh, system.basis, x), info


def ray_fem_solve(problem, rays, solver=SolverConfig(), npw=6.0):
    """Ray-enriched solve; ``rays`` must cover every node of the problem's mesh."""
    if rays.num_nodes != problem.mesh.num_nodes:
        raise ValueError("ray field does not match the mesh")
    problem = replace(problem, rays=rays)
    system = assemble(problem)
    x, info = solve_system(system, solver, npw=npw)
    return WaveField(problem.mesh, system.basis, x), info


def _quadrature_points(mesh, order, region=None, exclude=None):
    qp, qw = reference_quadrature(order)
    lam = np.column_stack([1.0 - qp[:, 0] - qp[:, 1], qp])
    tri = mesh.triangles
    p = mesh.nodes[tri]
    centroid = p.mean(axis=1)
    keep = np.ones(tri.shape[0], dtype=bool)
    if region is not None:
        x0, x1, z0, z1 = region
        eps = 1e-12
        keep &= (centroid[:, 0] >= x0 - eps) & (centroid[:, 0] <= x1 + eps)
        keep &= (centroid[:, 1] >= z0 - eps) & (centroid[:, 1] <= z1 + eps)
    if exclude is not None:
        center, radius = exclude
        keep &= np.hypot(centroid[:, 0] - center[0], centroid[:, 1] - center[1]) > radius
    p = p[keep]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    area2 = np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    X = np.einsum("qa,eak->eqk", lam, p).reshape(-1, 2)
    W = (area2[:, None] * qw[None, :]).ravel()
    return X, W


def l2_error(field, reference, region=None, exclude=None, order=6):
    """``(||u_h - u||, ||u_h - u|| / ||u||)`` over the triangles inside ``region``.

    ``exclude=(center, radius)`` drops triangles whose centroid is within
    ``radius`` of ``center``.
    """
    X, W = _quadrature_points(field.mesh, order, region, exclude)
    ref = reference(X)
    err = field.evaluate(X) - ref
    ab = math.sqrt(float(np.sum(W * np.abs(err) ** 2)))
    nrm = math.sqrt(float(np.sum(W * np.abs(ref) ** 2)))
    return ab, (ab / nrm if nrm > 0 else float("inf"))


def l2_difference(f1, f2, region=None, order=4):
    """Relative L2 distance ``||f1 - f2|| / ||f2||`` on ``f2``'s mesh."""
    X, W = _quadrature_points(f2.mesh, order, region)
    v2 = f2.evaluate(X)
    d = f1.evaluate(X) - v2
    n2 = math.sqrt(float(np.sum(W * np.abs(v2) ** 2)))
    dn = math.sqrt(float(np.sum(W * np.abs(d) ** 2)))
    if n2 == 0:
        return 0.0 if dn == 0 else float("inf")
    return dn / n2


def angle_error(rays, exact, h, mask=None):
    """Nodal L2 angle error with weight ``h**2`` per node.

    ``exact`` has shape (n_nodes, fronts); each front is matched to the
    closest estimated direction at the node.
    """
    exact = np.atleast_2d(np.asarray(exact, dtype=float))
    if exact.shape[0] != rays.num_nodes:
        exact = exact.T
    a = rays.angles
    valid = np.arange(a.shape[1])[None, :] < rays.counts[:, None]
    diff = np.abs(wrap_angle(a[:, :, None] - exact[:, None, :]))
    diff = np.where(valid[:, :, None], diff, np.inf)
    best = diff.min(axis=1)
    if mask is not None:
        best = best[mask]
    return math.sqrt(float(h * h * np.sum(best**2)))


def ray_interpolant(mesh, omega, speed, rays, values):
    """Ray-space interpolant for single-direction rays: ``v_j = u(x_j) exp(-i k_j d_j . x_j)``."""
    if np.any(rays.counts != 1):
        raise ValueError("interpolant defined for one direction per node")
    basis = make_basis(mesh, omega, speed, rays)
    nodes = mesh.nodes
    phase = np.exp(-1j * np.einsum("nk,nk->n", basis.wavevectors[:, 0, :], nodes))
    return WaveField(mesh, basis, np.asarray(values) * phase)


def _snap_interior(scenario, h):
    """Move an interior source onto the grid so the exact field matches the discrete one."""
    if not isinstance(scenario, InteriorSource):
        return scenario
    x0, z0 = scenario.domain[0], scenario.domain[2]
    sx = x0 + h * round((scenario.source[0] - x0) / h)
    sz = z0 + h * round((scenario.source[1] - z0) / h)
    return replace(scenario, source=(sx, sz))


def _probe_margin(omega_probe, h, c_max, cfg):
    r, _ = sampling_plan(omega_probe, c_max, cfg)
    return h * math.ceil((r + 2 * h) / h - 1e-9)


def iter_ray_fem(scenario, omega, config=PipelineConfig()):
    """Probe at low frequency, learn rays, solve with ray-FEM, then re-learn from the solution.

    Returns ``(field, rays, result)``.
    """
    cfg = config
    t_start = time.perf_counter()
    c_min, c_max = scenario.speed_range
    width = scenario.domain[1] - scenario.domain[0]
    h = mesh_size(omega, c_min, cfg.npw, width)
    scenario = _snap_interior(scenario, h)
    interior = isinstance(scenario, InteriorSource)
    result = ExperimentResult(omega=omega, h=h)
    timings = result.timings

    # high-frequency mesh and its problem
    if interior:
        pml_nodes = scenario.pml_nodes(omega, h)
        mesh = scenario.mesh(h, omega=omega, pml_nodes=pml_nodes)
    else:
        mesh = scenario.mesh(h)
    problem = scenario.problem(mesh, omega, cfg.beta, quad_order=cfg.quad_order)
    phys = scenario.domain

    # low-frequency probe on an enlarged domain so circles fit around every node
    wt = probe_frequency(omega, cfg.probe_scale, cfg.probe_round)
    result.omega_probe = wt
    probe_nmla = cfg.nmla
    if cfg.probe_radius is not None:
        cap = cfg.probe_radius if cfg.nmla.max_radius is None else min(cfg.probe_radius, cfg.nmla.max_radius)
        probe_nmla = replace(cfg.nmla, max_radius=cap)
    margin = _probe_margin(wt, h, c_max, probe_nmla)
    t = time.perf_counter()
    if interior:
        pmesh = scenario.mesh(h, margin, omega=wt, pml_nodes=scenario.pml_nodes(wt, h))
    else:
        pmesh = scenario.mesh(h, margin)
    pprob = scenario.problem(pmesh, wt, cfg.beta)
    probe, pinfo = s_fem_solve(pprob, cfg.solver, cfg.npw)
    timings["probe"] = time.perf_counter() - t
    result.iterations_probe = pinfo.iterations
    pbounds = (phys[0] - margin, phys[1] + margin, phys[2] - margin, phys[3] + margin)

    t = time.perf_counter()
    rays = ray_learning(wt, mesh, scenario.speed, probe, probe_nmla, cfg.hc, bounds=pbounds)
    radial = 0.0
    if interior:
        radial = cfg.radial_wavelengths * 2 * np.pi * c_max / omega + sampling_plan(omega, c_max, cfg.nmla)[0]
        rays = exact_radial_rays(rays, mesh.nodes, scenario.source, radial, cfg.standard_cells * h)
    timings["learn"] = time.perf_counter() - t

    exclude = None
    if interior:
        exclude = (scenario.source, cfg.exclude_wavelengths * 2 * np.pi * c_max / omega)
    phys_mask = _inside(mesh.nodes, phys)
    bearings = scenario.bearings(mesh.nodes)
    if bearings is not None:
        result.angle_error_low = angle_error(rays, bearings, h, _angle_mask(mesh, phys_mask, scenario, radial))

    t = time.perf_counter()
    u1, info = ray_fem_solve(problem, rays, cfg.solver, cfg.npw)
    timings["solve"] = time.perf_counter() - t
    timings["high_setup"] = info.setup_time
    timings["high_krylov"] = info.solve_time
    result.iterations_high = info.iterations
    result.ndof = u1.basis.num_dofs
    reference = (lambda p: scenario.exact(p, omega)) if scenario.has_exact() else None
    if reference is not None:
        result.error_abs_low, result.error_rel_low = l2_error(u1, reference, phys, exclude)
        result.error_abs, result.error_rel = result.error_abs_low, result.error_rel_low

    # re-learn from the high-frequency field until the solution settles
    high_cfg = cfg.nmla_high or cfg.nmla
    tol, niter = 1.0, 0
    t = time.perf_counter()
    while tol > cfg.eps and niter < cfg.max_iter:
        rays = ray_learning(omega, mesh, scenario.speed, u1, high_cfg, cfg.hc, bounds=phys, previous=rays)
        if interior:
            rays = exact_radial_rays(rays, mesh.nodes, scenario.source, radial, cfg.standard_cells * h)
        u2, info = ray_fem_solve(problem, rays, cfg.solver, cfg.npw)
        result.iterations_high = max(result.iterations_high, info.iterations)
        tol = l2_difference(u1, u2, phys)
        u1 = u2
        niter += 1
        log.info("outer iteration %d: relative change %.3e", niter, tol)
    timings["iterate"] = time.perf_counter() - t
    result.niter = niter
    result.outer_converged = tol <= cfg.eps or cfg.max_iter == 0
    if bearings is not None and niter:
        result.angle_error_high = angle_error(rays, bearings, h, _angle_mask(mesh, phys_mask, scenario, radial))
    if reference is not None and niter:
        result.error_abs, result.error_rel = l2_error(u1, reference, phys, exclude)

    if cfg.exact_rays and isinstance(scenario, ExteriorSources) and len(scenario.sources) == 1:
        ex = RayField.from_lists(list(scenario.exact_rays(mesh.nodes)))
        t = time.perf_counter()
        ue, _ = ray_fem_solve(problem, ex, cfg.solver, cfg.npw)
        timings["exact_rays"] = time.perf_counter() - t
        result.error_abs_exact_rays, result.error_rel_exact_rays = l2_error(ue, reference, phys)
    timings["total"] = time.perf_counter() - t_start
    if not result.outer_converged:
        result.status = "outer-loop-not-converged"
    return u1, rays, result


def _inside(points, box, tol=1e-12):
    return (
        (points[:, 0] >= box[0] - tol)
        & (points[:, 0] <= box[1] + tol)
        & (points[:, 1] >= box[2] - tol)
        & (points[:, 1] <= box[3] + tol)
    )


def _angle_mask(mesh, phys_mask, scenario, radial):
    mask = phys_mask.copy()
    if isinstance(scenario, InteriorSource):
        d = mesh.nodes - np.asarray(scenario.source)
        mask &= np.hypot(d[:, 0], d[:, 1]) > radial
    return mask
