"""Geometric Lorenz-like return maps and their statistical laws, numerically.

The library builds the classical cusp-singular skew product on the square,
its suspension flow with logarithmic roof, the Ulam/leaf-family measure
machinery, and the experiment layer checking correlation decay, hitting-time
logarithm laws, quantitative recurrence and exact dimensionality.
"""

from . import errors
from .maps import (
    AxiomReport,
    ModelParams,
    SectionPoint,
    ValidatedModel,
    axiom_check,
    d_poincare,
    one_d_derivative,
    one_d_map,
    one_d_map_total,
    params_from_text,
    params_to_text,
    poincare_map,
    reference_model,
    reference_params,
    validate,
)
from .flow import (
    FlowPoint,
    RoofFunction,
    SuspensionState,
    advance,
    embed,
    linear_flow,
    mean_return_time,
    roof,
)
from .measures import (
    Density1D,
    LeafFamily,
    SkewProductMap,
    TransferOperator,
    disintegrate,
    doubling_skew,
    invariant_density,
    lipschitz_restrict,
    prod_bound,
    push_forward,
    srb_iterate,
    ulam_operator,
    var_G,
    variation,
    w1_1d,
    w1_zero,
)
from .stats import (
    DecaySeries,
    DimensionEstimate,
    HittingSample,
    correlation_mc,
    correlation_measure,
    exact_dimension,
    hitting_time_flow,
    hitting_time_map,
    local_dimension,
    loglaw_slope,
    recurrence_time_flow,
    recurrence_time_map,
    saussol_check,
)

__version__ = "0.1.0"
