"""Measure-valued calculus for DC functions on piecewise-rational chart domains."""

from .algebra import Fn
from .atlas import AtlasScene, Chart, Overlap, TransitionMap, check_system, global_measure, starpush_check
from .cellgeom import CellComplex, QuadratureRule, box_complex, grid_complex, interval_complex
from .checks import Context, run_check
from .conedemo import ConeScene
from .connection import christoffel, christoffel_transform_check, covariant_derivative_tensor
from .dcops import (
    gamma2_check,
    geod_identity_check,
    gradient,
    hessian,
    hessian_identity_check,
    ibp_check,
    laplacian_divergence,
    laplacian_trace,
    taylor_check,
)
from .errors import DCCalcError, SchemaError
from .measurefield import MeasureField, derivative, measure_residual, multiply, numeric_tier, product_rule
from .metric import MetricField, identity_metric
from .pwalg import PiecewiseScalar
from .report import run_scene, to_csv, to_json
from .tensorcalc import CovariantTensor, VectorField, cauchy_schwarz_check, evaluate, pullback_tensor, tensor_norm

__version__ = "0.1.0"
