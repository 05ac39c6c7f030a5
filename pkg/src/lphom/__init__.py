"""Locally-periodic homogenization toolkit.

Coverings and locally-periodic approximation operators, plywood and
perforated microstructures, periodic cell solvers for homogenized tensors,
macroscopic solvers and convergence studies.
"""
from .cell import (HomogenizedTensorField, PeriodicCellGrid, assemble_Ahom, assemble_Bhom, build_cell_coefficient,
                   homogenize_elastic, homogenize_scalar, solve_cell_elastic, solve_cell_scalar, solve_cell_sheared)
from .fields import RotationAngleField, TransformationField, rotation
from .geometry import Covering, DomainBox, build_covering, build_cell_covering, mollified_cutoff
from .lab import StudyReport, StudySpec, run_study
from .lts import (ConvergenceRecord, QuadratureGrid, SeparableFunction, eval_Leps, eval_Leps0, eval_Leps_grad,
                  eval_Leps_rho, verify_frozen_convergence, verify_gradient_convergence, verify_mean_convergence)
from .macro import BoundaryData, MacroMesh, solve_direct_micro_scalar, solve_macro_elastic, solve_macro_scalar
from .microstructure import IndicatorSpec, indicator, lp_np_discrepancy
from .tensors import Tensor4, voigt_reuss_bounds

__version__ = "0.1.0"
