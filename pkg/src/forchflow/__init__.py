"""Mixed finite elements for generalized Forchheimer flow of slightly
compressible fluids on the unit square."""

from .constitutive import ForchheimerPolynomial, eval_K, flux, new_polynomial, solve_s
from .manufactured import case_catalog, consistency_check, get_case
from .mesh import build_unit_square
from .system import MixedSpaces, NewtonConfig, ProblemData, TimeGrid, newton_solve, time_march

__version__ = "0.1.0"
