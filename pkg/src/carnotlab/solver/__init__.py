"""Finite-difference solvers for the Cauchy-Dirichlet and obstacle problems."""

from .checkpoint import load_checkpoint, save_checkpoint
from .core import (ConvergenceError, comparison_trials, complementarity_residual, discrete_H,
                   solve_cauchy_dirichlet, solve_obstacle, solve_obstacle_penalty)
from .grid import Grid, GridFunction, build_grid, sample_on_grid
from .stencil import MonotonicityError, StencilOperator, discretize

__all__ = [
    "ConvergenceError", "Grid", "GridFunction", "MonotonicityError", "StencilOperator", "build_grid",
    "comparison_trials", "complementarity_residual", "discrete_H", "discretize", "load_checkpoint",
    "sample_on_grid", "save_checkpoint", "solve_cauchy_dirichlet", "solve_obstacle",
    "solve_obstacle_penalty",
]
