"""Phase-field energies, diffuse varifolds and Gamma-limit experiments in 2D."""

from ._accel import USE_NUMBA
from .grid import BC, Grid2D, ScalarField2D, make_grid, read_field, write_field

__version__ = "0.1.0"

__all__ = [
    "BC",
    "USE_NUMBA",
    "Grid2D",
    "ScalarField2D",
    "make_grid",
    "read_field",
    "write_field",
]
