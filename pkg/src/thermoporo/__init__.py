"""Mixed finite elements for nonlinear thermo-poroelasticity on the unit square."""
from .coeffs import (DerivedCoeffs, ParameterError, PhysicalParams, derive_coeffs,
                     from_multiphysics, to_multiphysics)
from .mesh import Mesh, Side, build_unit_square
from .solver import (LinearSolveError, MFEMSolver, NewtonDivergence, SchemeConfig, SolverError,
                     State, ThreeFieldSolver, init_state, run, solve_threefield_baseline, step)

__all__ = [
    "DerivedCoeffs", "ParameterError", "PhysicalParams", "derive_coeffs", "from_multiphysics",
    "to_multiphysics", "Mesh", "Side", "build_unit_square", "LinearSolveError", "MFEMSolver",
    "NewtonDivergence", "SchemeConfig", "SolverError", "State", "ThreeFieldSolver", "init_state",
    "run", "solve_threefield_baseline", "step",
]
