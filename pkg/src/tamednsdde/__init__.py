"""Tamed theta schemes for neutral stochastic delay differential equations."""
from .errors import (
    DegenerateRegression, GridMismatchError, GuardViolation, InvalidCoefficientError,
    InvalidExperiment, NSDDEError, ParameterRangeError, SchemaViolation, SolverNonConvergence,
)
from .experiments import (
    ConvergenceStudy, ModulusStudy, MomentStudy, fit_order, run_convergence, run_modulus_study,
    run_moment_study,
)
from .model import AssumptionConstants, ExampleModel, ModelId, ProblemSpec, make_example
from .paths import BrownianGrid, coarsen, generate
from .scheme import (
    GuardMode, ImplicitSolverPolicy, SchemeConfig, Variant, check_guards, integrate, integrate_batch,
)
from .taming import CutoffConfig, TamedCoefficients, TamingConfig, TamingMode, cutoff
from .verify import AssumptionId, check_assumption, estimate_guard_constants

__version__ = "0.1.0"
