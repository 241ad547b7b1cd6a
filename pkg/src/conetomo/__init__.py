"""Generalized cone (broken-ray) Radon transform in two dimensions."""

from .profiles import CurveProfile, parse_profile, check_bolker
from .grids import ImageGrid, Sinogram, ScanGeometry, read_grid, write_grid
from .operator import SystemMatrix, build_system_matrix, forward, adjoint, operator_norm

__version__ = "0.1.0"
