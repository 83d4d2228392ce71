"""Linear sloshing eigenvalues with surface tension: finite elements, closed forms, identity checks."""
from .analytic import bessel_jp_root, box_dispersion, cylinder_dispersion, cylinder_spectrum
from .assembly import OperatorSet, assemble, parse_bond
from .eigensolve import SloshingMode, Spectrum, solve, solve_coupled, solve_reduced
from .errors import SloshError
from .geometry import ContainerSpec, MeshPair, build_mesh, refine

__version__ = "0.1.0"

__all__ = [
    "ContainerSpec",
    "MeshPair",
    "OperatorSet",
    "SloshError",
    "SloshingMode",
    "Spectrum",
    "assemble",
    "bessel_jp_root",
    "box_dispersion",
    "build_mesh",
    "cylinder_dispersion",
    "cylinder_spectrum",
    "parse_bond",
    "refine",
    "solve",
    "solve_coupled",
    "solve_reduced",
]
