from .bounds import (
    dirac_tv_bound,
    fuzzy_mass,
    lipschitz_constant,
    relaxation_gap_bound,
)
from .metrics import (
    CapTooSmallError,
    EpigraphGrid,
    ModulusTable,
    RelaxedDistanceProfile,
    boundary_gap,
    boundary_table,
    empirical_modulus,
    epigraph_grid,
    hausdorff_epigraph,
    relaxed_linf_exhaustive,
    relaxed_linf_profile,
    relaxed_linf_tk,
    sup_distance,
)
from .oracle import (
    DpResult,
    GuardExceededError,
    PolicyResult,
    ScenarioTree,
    TreeRules,
    brute_force_policies,
    build_scenario_tree,
    european_value,
    lattice_dp,
    lognormal_european_value,
    optimal_boundary_from_dp,
    random_relaxed_rules,
    tree_dp,
    tree_rule_values,
)
