"""P1 finite elements with L1 time stepping for time-fractional diffusion."""

from .estimator import FractionalDiffusionFEM
from .femcore import Coefficient, FeFunction, FeSpace
from .fracops import FractionalOrder, TimeSamples, mittag_leffler
from .march import ProblemSpec, TimeGrid, solve
from .meshkit import Mesh, interval_mesh, read_mesh, refine, unit_square_tri_mesh, write_mesh
from .study import StudyConfig, run_study

__version__ = "0.1.0"

__all__ = [
    "Coefficient",
    "FeFunction",
    "FeSpace",
    "FractionalDiffusionFEM",
    "FractionalOrder",
    "Mesh",
    "ProblemSpec",
    "StudyConfig",
    "TimeGrid",
    "TimeSamples",
    "interval_mesh",
    "mittag_leffler",
    "read_mesh",
    "refine",
    "run_study",
    "solve",
    "unit_square_tri_mesh",
    "write_mesh",
]
