"""Sparse spacetime constraints for linear elastodynamics via modal wiggly splines."""
from .modal import ModalBasis, check_basis, eigendecompose, from_modal, mode_table, to_modal
from .model import ChainSpec, Mesh2DSpec, ModelSystem, assemble_chain, assemble_mesh2d, rect_mesh
from .oracle import DiscreteFunctional, transcribe_minimize, transcribe_minimize_warped, variation_probe
from .spacetime import (
    ConstraintSet,
    HardKeyframes,
    NodeConstraint,
    QuadraticForm,
    StationarityReport,
    Underdetermined,
    assemble_E,
    assemble_EC,
    hard_as_constraints,
    solve_hard,
    solve_sparse,
    verify,
    verify_hard,
    verify_smoothness,
    verify_stationarity,
)
from .trajectory import Trajectory
from .warp import WarpedConstraintProblem, WarpMap, make_warp, solve_warped, warp_trajectory
from .wiggly import Regime, WigglySolution, WigglySpline, basis_eval, build_spline, classify, eval_spline

__version__ = "0.1.0"
