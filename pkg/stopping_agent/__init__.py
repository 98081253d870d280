from .boundary import (
    AnalyticBoundary,
    Boundary,
    ConstantBoundary,
    TabularBoundary,
    XiGrid,
    eval_boundary,
    load_tabular_boundary,
    save_tabular_boundary,
    tabulate,
)
from .convolution import (
    ConvolutionResult,
    inf_convolution,
    inf_convolve_values,
    sup_convolution,
    sup_convolve_values,
)
from .extraction import extract_boundary
from .mlp import (
    AdTape,
    MlpBoundary,
    NonFiniteError,
    init_mlp,
    load_mlp,
    mlp_value_and_grad,
    save_mlp,
)
from .regions import (
    gap_distance,
    gap_from_levels,
    in_fuzzy_region,
    in_stop_region,
    phase_indicator,
    phase_indicator_grad,
)
from .stopping import (
    BoundaryPolicy,
    RelaxedRule,
    ValueEstimate,
    hitting_time,
    hitting_times,
    pool_estimates,
    relaxed_weights,
    save_rules_csv,
    tv_bar2,
    tv_distance,
    value_relaxed,
    value_strict,
    weights_from_intensities,
)

__all__ = [
    "AnalyticBoundary",
    "Boundary",
    "ConstantBoundary",
    "TabularBoundary",
    "XiGrid",
    "eval_boundary",
    "load_tabular_boundary",
    "save_tabular_boundary",
    "tabulate",
    "ConvolutionResult",
    "inf_convolution",
    "inf_convolve_values",
    "sup_convolution",
    "sup_convolve_values",
    "extract_boundary",
    "AdTape",
    "MlpBoundary",
    "NonFiniteError",
    "init_mlp",
    "load_mlp",
    "mlp_value_and_grad",
    "save_mlp",
    "gap_distance",
    "gap_from_levels",
    "in_fuzzy_region",
    "in_stop_region",
    "phase_indicator",
    "phase_indicator_grad",
    "BoundaryPolicy",
    "RelaxedRule",
    "ValueEstimate",
    "hitting_time",
    "hitting_times",
    "pool_estimates",
    "relaxed_weights",
    "save_rules_csv",
    "tv_bar2",
    "tv_distance",
    "value_relaxed",
    "value_strict",
    "weights_from_intensities",
]
