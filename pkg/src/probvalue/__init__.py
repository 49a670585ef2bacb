"""Monte Carlo estimation of probabilistic values (semivalues)."""

from probvalue.diagnostics import (
    ConvergenceCurve,
    aucc,
    first_order_variance,
    hajek_first_order_variance,
    mse_study,
    relative_sq_error,
)
from probvalue.ease import EstimatorConfig, ease_estimate, pair_ease_estimate
from probvalue.estimators import (
    EstimateReport,
    aipw_estimate,
    edge_lift_estimate,
    hajek_estimate,
    ht_estimate,
    pair_aipw_estimate,
    shapley_wls_spec,
    wls_ridge_estimate,
)
from probvalue.families import SemivalueFamily, TargetSpec, make_family, parse_family
from probvalue.game import (
    Coalition,
    Game,
    QueryLedger,
    SOUGame,
    UtilityOracle,
    brute_force_values,
    exact_sou_values,
    sou_generate,
)
from probvalue.methods import METHODS, run_method
from probvalue.sampling import CellLaw, CellPartition, init_law, named_law, residual_law
from probvalue.surrogate import FeatureBasis, SufficientStats, SurrogateModel, fit_profiled

__version__ = "0.1.0"

__all__ = [
    "CellLaw",
    "CellPartition",
    "Coalition",
    "ConvergenceCurve",
    "EstimateReport",
    "EstimatorConfig",
    "FeatureBasis",
    "Game",
    "METHODS",
    "QueryLedger",
    "SOUGame",
    "SemivalueFamily",
    "SufficientStats",
    "SurrogateModel",
    "TargetSpec",
    "UtilityOracle",
    "aipw_estimate",
    "aucc",
    "brute_force_values",
    "ease_estimate",
    "edge_lift_estimate",
    "exact_sou_values",
    "first_order_variance",
    "fit_profiled",
    "hajek_estimate",
    "hajek_first_order_variance",
    "ht_estimate",
    "init_law",
    "make_family",
    "mse_study",
    "named_law",
    "pair_aipw_estimate",
    "pair_ease_estimate",
    "parse_family",
    "relative_sq_error",
    "residual_law",
    "run_method",
    "shapley_wls_spec",
    "sou_generate",
    "wls_ridge_estimate",
]
