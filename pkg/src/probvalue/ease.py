"""Two-stage efficiency-aware surrogate-adjusted estimation (EASE).

Stage 1 spends a pilot budget under the closed-form initial law, fits the
profiled surrogate on all pilot draws and turns per-cell residual second
moments into a floored Neyman-type law. Stage 2 draws fresh coalitions from
that law and returns the cross-fitted AIPW estimate.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from probvalue.estimators import (
    MIN_ROWS_PER_FEATURE,
    EstimateReport,
    cross_fit,
    endpoint_term,
    fit_surrogate,
    pair_design,
)
from probvalue.families import SemivalueFamily, TargetSpec, rho_vector
from probvalue.sampling import (
    CellLaw,
    CellPartition,
    ResidualMoments,
    init_law,
    prob,
    residual_law,
    residual_moments,
    sample,
)
from probvalue.surrogate import FeatureBasis, SufficientStats

__all__ = ["EstimatorConfig", "ease_estimate", "pair_ease_estimate", "split_budget"]


@dataclass
class EstimatorConfig:
    family: SemivalueFamily
    budget: int
    targets: TargetSpec | None = None
    pilot_fraction: float = 0.2
    folds: int = 2
    eps: float = 0.2
    basis: str = "fo"
    surrogate_lambda: float | None = None
    wls_lambda: float | None = None
    law: str | None = None
    seed: int | None = 0
    reuse_pilot: bool = False
    shared: bool = True
    min_rows: float = MIN_ROWS_PER_FEATURE
    require_coverage: bool = True

    def __post_init__(self):
        if self.targets is None:
            self.targets = TargetSpec.identity(self.family.n)
        if not 0.0 < self.pilot_fraction < 1.0:
            raise ValueError("pilot fraction must lie in (0, 1)")
        if self.folds < 2:
            raise ValueError("cross-fitting needs at least two folds")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("floor must lie in (0, 1]")
        if self.budget < 1:
            raise ValueError("budget must be positive")
        if self.min_rows < 0:
            raise ValueError("min_rows must be nonnegative")

    def echo(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in ("family", "targets")}
        out["family"] = self.family.name
        out["n"] = self.family.n
        out["d"] = self.targets.d
        return out


def split_budget(m: int, pilot_fraction: float, folds: int) -> tuple[int, int]:
    """``(m_init, m_est)`` with ``m_init = ceil(fraction * m)``."""
    m_init = math.ceil(pilot_fraction * m)
    m_est = m - m_init
    if m_init < 1 or m_est < folds:
        raise ValueError(f"budget of {m} draws is too small for a pilot and {folds} folds")
    return m_init, m_est


def _rng(config, rng):
    return np.random.default_rng(config.seed) if rng is None else rng


def _sq_residual(rhoA, model, X, y) -> np.ndarray:
    """``||rho_A(S)||^2 (y - h)^2`` summed coordinatewise for per-target models."""
    h = np.asarray(X @ (model.beta if model.shared else model.beta.T))
    if h.ndim == 1:
        return np.sum(rhoA**2, axis=1) * (y - h) ** 2
    return np.sum(rhoA**2 * (y[:, None] - h) ** 2, axis=1)


def _stage2_law(partition, moments, config, law0) -> tuple[CellLaw, bool]:
    """Floored residual law, or the initial law when the pilot missed a cell."""
    if config.require_coverage and np.any(moments.Nk == 0):
        return law0, True
    return residual_law(partition, moments, config.eps, law0), False


def _pilot_extra(Omega, X, y, basis, shared):
    if shared:
        return SufficientStats(basis.p, Omega.shape[1]).add_batch(Omega, X, y)
    return [SufficientStats(basis.p, 1).add_batch(Omega[:, j : j + 1], X, y) for j in range(Omega.shape[1])]


def ease_estimate(oracle, config: EstimatorConfig, rng=None) -> EstimateReport:
    family, targets = config.family, config.targets
    n = family.n
    rng = _rng(config, rng)
    basis = FeatureBasis(config.basis, n)
    m_init, m_est = split_budget(config.budget - 2, config.pilot_fraction, config.folds)
    start = oracle.ledger.count

    partition = CellPartition.by_size(n)
    law0 = init_law(partition, family, targets)
    masks0 = sample(law0, rng, m_init)
    y0 = oracle.evaluate_batch(masks0)
    rho0 = rho_vector(family, targets, masks0)
    Omega0 = rho0 / prob(law0, masks0)[:, None]
    X0 = basis.matrix(masks0)
    h0 = fit_surrogate(Omega0, X0, y0, basis, shared=config.shared, lam=config.surrogate_lambda, min_rows=config.min_rows)
    moments = residual_moments(partition, masks0, _sq_residual(rho0, h0, X0, y0))
    law, fell_back = _stage2_law(partition, moments, config, law0)

    masks = sample(law, rng, m_est)
    y = oracle.evaluate_batch(masks)
    Omega = rho_vector(family, targets, masks) / prob(law, masks)[:, None]
    extra = _pilot_extra(Omega0, X0, y0, basis, config.shared) if config.reuse_pilot else None
    est, folds, _ = cross_fit(
        Omega, basis.matrix(masks), y, basis, family, targets, config.folds,
        shared=config.shared, lam=config.surrogate_lambda, extra_stats=extra, min_rows=config.min_rows,
    )
    est = est + endpoint_term(oracle, family, targets)
    return EstimateReport(
        est, oracle.ledger.count - start, f"ease-{config.basis}", law.snapshot(), folds,
        config.echo() | {"m_init": m_init, "m_est": m_est, "law_fallback": fell_back}, config.seed,
    )


def symmetrize_moments(moments: ResidualMoments, partition: CellPartition) -> ResidualMoments:
    """Pool by-size moments over sizes ``s`` and ``n - s``."""
    if partition.mode != "by-size":
        raise ValueError("pair moments need a by-size partition")
    sizes = np.array([cell[0][0] for cell in partition.cells])
    n = partition.n
    sums = moments.Mhat * np.maximum(moments.Nk, 1)
    counts = np.asarray(moments.Nk, dtype=float)
    index = {s: k for k, s in enumerate(sizes)}
    mirror = np.array([index[n - s] for s in sizes])
    pooled_n = counts + counts[mirror]
    pooled = (sums + sums[mirror]) / np.maximum(pooled_n, 1)
    return ResidualMoments(pooled, pooled_n.astype(np.int64))


def pair_ease_estimate(oracle, config: EstimatorConfig, rng=None) -> EstimateReport:
    """EASE on complement pairs: each draw spends two queries on ``S`` and ``S^c``.

    The pilot's residual moments use the pair residual and are pooled across
    sizes ``s`` and ``n - s`` because a pair is reachable from either end.
    """
    family, targets = config.family, config.targets
    if not family.is_sign_symmetric:
        raise ValueError(f"complement-pair estimation needs a sign-symmetric family, got {family.name}")
    n = family.n
    rng = _rng(config, rng)
    basis = FeatureBasis(config.basis, n)
    pairs = (config.budget - 2) // 2
    m_init, m_est = split_budget(pairs, config.pilot_fraction, config.folds)
    start = oracle.ledger.count

    partition = CellPartition.by_size(n)
    law0 = init_law(partition, family, targets)
    masks0 = sample(law0, rng, m_init)
    Omega0, dX0, dy0, rho0 = pair_design(oracle, family, targets, law0, basis, masks0)
    h0 = fit_surrogate(Omega0, dX0, dy0, basis, shared=config.shared, lam=config.surrogate_lambda, min_rows=config.min_rows)
    raw = residual_moments(partition, masks0, _sq_residual(rho0, h0, dX0, dy0))
    law, fell_back = _stage2_law(partition, symmetrize_moments(raw, partition), config, law0)

    masks = sample(law, rng, m_est)
    Omega, dX, dy, _ = pair_design(oracle, family, targets, law, basis, masks)
    extra = _pilot_extra(Omega0, dX0, dy0, basis, config.shared) if config.reuse_pilot else None
    est, folds, _ = cross_fit(
        Omega, dX, dy, basis, family, targets, config.folds,
        shared=config.shared, lam=config.surrogate_lambda, extra_stats=extra, min_rows=config.min_rows,
    )
    est = est + endpoint_term(oracle, family, targets)
    return EstimateReport(
        est, oracle.ledger.count - start, "pair-ease", law.snapshot(), folds,
        config.echo() | {"pairs_init": m_init, "pairs_est": m_est, "law_fallback": fell_back}, config.seed,
    )
