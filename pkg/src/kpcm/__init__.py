"""Trigonometric Calogero-Moser particles as poles of KP tau-functions.

Modules: ``linalg`` (LU, characteristic polynomials, roots, exponentials),
``cm_core`` (Lax matrices, Hamiltonians, gradients), ``flows`` (hierarchy
integration), ``kp_tau`` (tau-functions, pole oracle, shifts, residues, KP
residual), ``backlund`` (Backlund map and its large-mu expansion),
``checks`` and ``cli`` (invariant suites and command line).
"""

from .cm_core import PhaseState
from .errors import (BranchAmbiguity, ConvergenceFailure, EvaluationAtPole, KPCMError,
                     NewtonDivergence, PoleCollision, RootsNotConverged, SingularLinearSystem,
                     StepUnderflow)
from .flows import HierarchyTimes, Trajectory, evolve_multi, integrate

__version__ = "0.1.0"

__all__ = [
    "PhaseState", "HierarchyTimes", "Trajectory", "integrate", "evolve_multi",
    "KPCMError", "SingularLinearSystem", "ConvergenceFailure", "RootsNotConverged",
    "PoleCollision", "EvaluationAtPole", "StepUnderflow", "BranchAmbiguity", "NewtonDivergence",
]
