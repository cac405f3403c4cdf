"""Ray-enriched finite elements for the 2D high-frequency Helmholtz equation."""

from .fem import Helmholtz, PMLProfile, assemble, assemble_pml, assemble_rayfem, assemble_sfem, point_source
from .field import WaveField
from .mesh import Mesh, build_coarse_map, build_mesh, extend_with_pml
from .nmla import NMLAConfig, nmla
from .pipeline import PipelineConfig, SolverConfig, iter_ray_fem, l2_error, ray_fem_solve, s_fem_solve
from .rays import RayField, exact_radial_rays, ray_learning
from .scenarios import make_scenario

__version__ = "0.1.0"

__all__ = [
    "Helmholtz",
    "PMLProfile",
    "assemble",
    "assemble_pml",
    "assemble_rayfem",
    "assemble_sfem",
    "point_source",
    "WaveField",
    "Mesh",
    "build_mesh",
    "build_coarse_map",
    "extend_with_pml",
    "NMLAConfig",
    "nmla",
    "PipelineConfig",
    "SolverConfig",
    "iter_ray_fem",
    "l2_error",
    "ray_fem_solve",
    "s_fem_solve",
    "RayField",
    "exact_radial_rays",
    "ray_learning",
    "make_scenario",
]
