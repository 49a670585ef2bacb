"""Named estimator presets used by configs and the bench harness.

Every preset takes a total query budget that includes the two endpoint
queries, and never spends more than that.
"""

from __future__ import annotations

from probvalue.ease import EstimatorConfig, ease_estimate, pair_ease_estimate
from probvalue.estimators import (
    MIN_ROWS_PER_FEATURE,
    EstimateReport,
    aipw_estimate,
    edge_lift_vector,
    hajek_estimate,
    ht_estimate,
    shapley_wls_spec,
    wls_ridge_estimate,
)
from probvalue.families import SemivalueFamily, TargetSpec
from probvalue.sampling import named_law

METHODS = (
    "ht",
    "hajek-ofa",
    "hajek-svarm",
    "kernelshap",
    "leverageshap",
    "aipw-unweighted",
    "ease-fo",
    "ease-sp",
    "pair-ease",
    "edge-lift",
)

SHAPLEY_ONLY = frozenset({"kernelshap", "leverageshap"})
PAIRED = frozenset({"pair-ease"})


def check_method(name: str, family: SemivalueFamily | None = None) -> None:
    if name not in METHODS:
        raise ValueError(f"unknown method {name!r}; expected one of {', '.join(METHODS)}")
    if family is None:
        return
    if name in SHAPLEY_ONLY and family.kind != "shapley":
        raise ValueError(f"{name} estimates the Shapley value only, got {family.name}")
    if name in PAIRED and not family.is_sign_symmetric:
        raise ValueError(f"{name} needs a sign-symmetric family, got {family.name}")


def min_budget(name: str, options: dict | None = None) -> int:
    options = options or {}
    folds = options.get("folds", 2)
    if name in ("ease-fo", "ease-sp"):
        return 2 + folds + 1
    if name == "pair-ease":
        return 2 + 2 * (folds + 1)
    if name == "aipw-unweighted":
        return 2 + folds
    if name == "edge-lift":
        return 2
    return 3


def run_method(name, oracle, family, targets, budget: int, rng, options: dict | None = None) -> EstimateReport:
    """Run preset ``name`` with at most ``budget`` utility queries."""
    check_method(name, family)
    options = dict(options or {})
    targets = TargetSpec.identity(family.n) if targets is None else targets
    if budget < min_budget(name, options):
        raise ValueError(f"budget {budget} is below the minimum for {name}")
    n = family.n
    m = budget - 2
    if name == "ht":
        report = ht_estimate(oracle, family, targets, named_law(options.get("law", "uniform"), n), m, rng)
    elif name in ("hajek-ofa", "hajek-svarm"):
        law = named_law(name.split("-")[1], n)
        report = hajek_estimate(oracle, family, targets, law, "membership", m, rng)
    elif name in SHAPLEY_ONLY:
        law = named_law("kernelshap" if name == "kernelshap" else "uniform", n)
        report = wls_ridge_estimate(oracle, shapley_wls_spec(n, targets), law, m, options.get("wls_lambda"), rng)
    elif name == "aipw-unweighted":
        report = aipw_estimate(
            oracle, family, targets, named_law(options.get("law", "uniform"), n),
            options.get("basis", "fo"), m, options.get("folds", 2), rng, loss="unweighted",
        )
    elif name == "edge-lift":
        report = edge_lift_vector(oracle, family, targets, budget // 2, rng)
    else:
        config = EstimatorConfig(
            family=family,
            targets=targets,
            budget=budget,
            basis=options.get("basis", "sp" if name == "ease-sp" else "fo"),
            pilot_fraction=options.get("pilot_fraction", 0.2),
            folds=options.get("folds", 2),
            eps=options.get("eps", 0.2),
            surrogate_lambda=options.get("surrogate_lambda"),
            reuse_pilot=options.get("reuse_pilot", False),
            min_rows=options.get("min_rows", MIN_ROWS_PER_FEATURE),
            require_coverage=options.get("require_coverage", True),
            seed=None,
        )
        report = (pair_ease_estimate if name in PAIRED else ease_estimate)(oracle, config, rng)
    report.method = name
    return report
