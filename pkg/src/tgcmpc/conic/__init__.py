"""Solver-agnostic conic programs (LP, SOCP, SDP)."""

from .backends import (
    ERROR,
    INACCURATE,
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    ClarabelBackend,
    CvxpyBackend,
    Solution,
    default_backend,
    finish,
    solve,
)
from .expr import Expr, bmat, concat, hstack, vstack
from .program import FULL_CONES, LEAN_CONES, ConicProgram, StandardForm

__all__ = [
    "ConicProgram",
    "ClarabelBackend",
    "CvxpyBackend",
    "Expr",
    "FULL_CONES",
    "LEAN_CONES",
    "Solution",
    "StandardForm",
    "bmat",
    "concat",
    "default_backend",
    "finish",
    "hstack",
    "solve",
    "vstack",
    "OPTIMAL",
    "INACCURATE",
    "INFEASIBLE",
    "UNBOUNDED",
    "ERROR",
]
