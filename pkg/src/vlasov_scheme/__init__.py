"""Entropy-penalized backward time-step scheme for a viscous mean-field system on the torus."""
from .errors import (
    ConfigurationError,
    DivergenceError,
    GridMismatchError,
    InstabilityError,
    NumericalConsistencyError,
    SchemeError,
    SizeError,
    UnsupportedExactError,
)
from .measures import Density, RawKernel, VelocityConfig, action_raw, w1_lp_oracle, wasserstein1
from .model import FinalCondition, PotentialSpec, eval_V, final_derivative, final_value, mean_field, total_potential
from .scheme import SchemeConfig, SchemeSolution, ValueReport, solve_fixed_point
from .step_kernel import GibbsKernel, build_kernel, lemma11_value, push_forward, step_cost
from .torus_grid import GridField, TorusGrid, circular_convolve, make_grid, quadrature, wrapped_gaussian

__version__ = "0.1.0"
