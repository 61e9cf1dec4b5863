"""Constraint services: SMT-LIB backend, substitution, simplification, models."""

from .backend import SolverError, Z3Process
from .core import (
    DEFAULT_TIMEOUT_MS,
    CheckResult,
    ConstraintSet,
    Provenance,
    Solver,
    Status,
    check_sat,
    default_solver,
    model_satisfies,
    simplify,
    substitute,
)
from .evaluate import evaluate
from .smtlib import term_to_smtlib, to_smtlib

__all__ = [
    "CheckResult", "ConstraintSet", "DEFAULT_TIMEOUT_MS", "Provenance", "Solver", "SolverError",
    "Status", "Z3Process", "check_sat", "default_solver", "evaluate", "model_satisfies",
    "simplify", "substitute", "term_to_smtlib", "to_smtlib",
]
