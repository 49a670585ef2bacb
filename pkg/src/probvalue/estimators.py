"""Monte Carlo estimators of semivalue targets ``A.T phi(u)``.

All single-coalition estimators sample interior coalitions (sizes 1..n-1)
and add the deterministic endpoint contribution
``A.T (alpha_{n-1} u([n]) - alpha_0 u(empty)) 1`` at a cost of two queries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from probvalue._bits import binom_table, complement, full_mask, masks_to_bool, popcount, random_subsets
from probvalue.families import SemivalueFamily, TargetSpec, rho_vector
from probvalue.sampling import (
    ANY,
    IN,
    CellLaw,
    CellPartition,
    init_moments,
    pair_mass,
    prob,
    sample,
)
from probvalue.surrogate import (
    FeatureBasis,
    SufficientStats,
    SurrogateModel,
    fit_reduced,
    fit_profiled,
    tau_vector,
)

__all__ = [
    "EstimateReport",
    "WLSSpec",
    "shapley_wls_spec",
    "endpoint_term",
    "ht_estimate",
    "ht_from_sample",
    "hajek_from_sample",
    "hajek_estimate",
    "wls_fit",
    "wls_ridge_estimate",
    "aipw_estimate",
    "cross_fit",
    "fit_surrogate",
    "MIN_ROWS_PER_FEATURE",
    "interior_tau",
    "pair_aipw_estimate",
    "edge_lift_estimate",
    "edge_lift_vector",
]


@dataclass
class EstimateReport:
    estimates: np.ndarray
    queries: int
    method: str = ""
    law: dict | None = None
    fold_estimates: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: object = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "estimates": np.asarray(self.estimates).tolist(),
            "queries": int(self.queries),
            "law": self.law,
            "fold_estimates": [np.asarray(f).tolist() for f in self.fold_estimates],
            "config": self.config,
            "seed": self.seed,
        }


def _targets(family: SemivalueFamily, targets: TargetSpec | None) -> TargetSpec:
    targets = TargetSpec.identity(family.n) if targets is None else targets
    if targets.n != family.n:
        raise ValueError("target matrix rows must equal the player count")
    return targets


def endpoint_term(oracle, family: SemivalueFamily, targets: TargetSpec) -> np.ndarray:
    """Deterministic contribution of the empty and grand coalitions (2 queries)."""
    n = family.n
    u_empty, u_full = oracle.evaluate_batch(np.array([0, full_mask(n)], dtype=np.uint64))
    c_full, c_empty = family.endpoint_weights()
    per_player = np.full(n, c_full * u_full + c_empty * u_empty)
    return targets.apply(per_player)


def _check_support(law: CellLaw, family: SemivalueFamily, targets: TargetSpec) -> None:
    if law.n != family.n:
        raise ValueError("law and family disagree on n")
    zero = law.pi == 0
    if np.any(zero):
        M = init_moments(law.partition, family, targets)
        if np.any(M[zero] > 0):
            raise ValueError("sampling law has zero probability where the target weights are nonzero")
    if not law.includes_endpoints:
        return
    raise ValueError("estimators expect laws on interior coalitions; endpoints are added exactly")


def _draw(oracle, law: CellLaw, m: int, rng):
    masks = sample(law, rng, m)
    y = oracle.evaluate_batch(masks)
    return masks, y


def _ipw_scores(family, targets, law, masks, y):
    gamma = rho_vector(family, targets, masks) / prob(law, masks)[:, None]
    return gamma * y[:, None]


def ht_from_sample(family, targets, law: CellLaw, masks, y) -> np.ndarray:
    """Interior HT part for an already evaluated sample."""
    return np.mean(_ipw_scores(family, targets, law, masks, y), axis=0)


def ht_estimate(oracle, family, targets, law: CellLaw, m: int, rng) -> EstimateReport:
    """Horvitz-Thompson: ``mean_t rho_A(S_t) u(S_t) / q(S_t)`` plus endpoints."""
    targets = _targets(family, targets)
    _check_support(law, family, targets)
    if m < 1:
        raise ValueError("need at least one sample")
    start = oracle.ledger.count
    masks, y = _draw(oracle, law, m, rng)
    est = ht_from_sample(family, targets, law, masks, y) + endpoint_term(oracle, family, targets)
    return EstimateReport(est, oracle.ledger.count - start, "ht", law.snapshot(), config={"m": m})


def _cell_probabilities(law: CellLaw, partition: CellPartition) -> np.ndarray:
    """``P_q(S in C_k)`` for a law that is constant on every coalition size."""
    if law.partition.mode not in ("by-size", "single"):
        raise ValueError("Hajek cell probabilities need a law that depends on size only")
    if partition.mode == "single":
        return np.array([1.0])
    Q = law.size_distribution()
    n = law.n
    out = np.zeros(partition.K)
    for k, cell in enumerate(partition.cells):
        for s, state in cell:
            if state == ANY:
                out[k] += Q[s]
            elif state == IN:
                out[k] += Q[s] * s / n
            else:
                out[k] += Q[s] * (n - s) / n
    return out


def _hajek_combine(values, cells, pi, K):
    counts = np.bincount(cells, minlength=K)
    est = np.zeros(values.shape[1])
    for k in np.flatnonzero(counts):
        est += pi[k] * np.mean(values[cells == k], axis=0)
    return est


def hajek_from_sample(family, targets, law: CellLaw, partition, masks, y) -> np.ndarray:
    """Interior Hajek part for an already evaluated sample."""
    n = family.n
    if isinstance(partition, str) and partition == "membership":
        Q = law.size_distribution()
        sizes = popcount(masks)
        X = masks_to_bool(masks, n)
        G = rho_vector(family, TargetSpec.identity(n), masks) / prob(law, masks)[:, None] * y[:, None]
        key = 2 * sizes[:, None] + X.astype(np.int64)  # (m, n) cell id per player
        ncell = 2 * (n + 1)
        sums = np.zeros((n, ncell))
        counts = np.zeros((n, ncell))
        rows = np.broadcast_to(np.arange(n), key.shape).ravel()
        np.add.at(sums, (rows, key.ravel()), G.ravel())
        np.add.at(counts, (rows, key.ravel()), 1.0)
        s_idx = np.arange(ncell) // 2
        inside = np.arange(ncell) % 2 == 1
        pi = np.where(inside, Q[s_idx] * s_idx / n, Q[s_idx] * (n - s_idx) / n)
        means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        return targets.apply(means @ pi)
    if isinstance(partition, str):
        builders = {"by-size": CellPartition.by_size, "single": CellPartition.single}
        if partition not in builders:
            raise ValueError(f"unknown partition {partition!r}")
        partition = builders[partition](n)
    pi = _cell_probabilities(law, partition)
    cells = partition.cell_index(masks)
    return _hajek_combine(_ipw_scores(family, targets, law, masks, y), cells, pi, partition.K)


def hajek_estimate(oracle, family, targets, law: CellLaw, partition, m: int, rng) -> EstimateReport:
    """Post-stratified (Hajek-type) weighted average.

    ``partition`` is ``"membership"`` (per-player cells split by size and by
    membership of that player, the OFA / stratified-SVARM construction),
    ``"by-size"``, ``"single"`` or an explicit :class:`CellPartition`. With
    ``"membership"`` each player value is post-stratified separately and the
    targets are formed afterwards. Cells with no samples contribute zero.
    """
    targets = _targets(family, targets)
    _check_support(law, family, targets)
    if m < 1:
        raise ValueError("need at least one sample")
    start = oracle.ledger.count
    masks, y = _draw(oracle, law, m, rng)
    est = hajek_from_sample(family, targets, law, partition, masks, y) + endpoint_term(oracle, family, targets)
    return EstimateReport(est, oracle.ledger.count - start, "hajek", law.snapshot(), config={"m": m})


@dataclass(frozen=True)
class WLSSpec:
    """Weighted least-squares identification ``tau = readout(beta*)``.

    ``weight`` and ``feature`` act on mask arrays. For the Shapley kernel
    design the Gram matrix and its pseudoinverse are known in closed form.
    """

    n: int
    weight: Callable
    feature: Callable
    targets: TargetSpec
    gram: np.ndarray | None = None
    gram_pinv: np.ndarray | None = None

    def leverage(self, masks, law: CellLaw) -> np.ndarray:
        if self.gram_pinv is None:
            raise ValueError("leverage needs a known Gram pseudoinverse")
        Z = self.feature(masks)
        wt = self.weight(masks) / prob(law, masks)
        return wt * np.einsum("ij,jk,ik->i", Z, self.gram_pinv, Z)


def shapley_kernel(masks, n: int) -> np.ndarray:
    s = popcount(masks).astype(float)
    w = (n - 1) / (binom_table(n)[s.astype(int)] * s * (n - s))
    return np.where((s >= 1) & (s <= n - 1), w, 0.0)


def centred_inclusion(masks, n: int) -> np.ndarray:
    X = masks_to_bool(masks, n).astype(float)
    return X - X.sum(axis=1, keepdims=True) / n


def shapley_wls_spec(n: int, targets: TargetSpec | None = None) -> WLSSpec:
    targets = TargetSpec.identity(n) if targets is None else targets
    C = np.eye(n) - np.ones((n, n)) / n
    return WLSSpec(
        n=n,
        weight=lambda masks: shapley_kernel(masks, n),
        feature=lambda masks: centred_inclusion(masks, n),
        targets=targets,
        gram=(n - 1) / n * C,
        gram_pinv=n / (n - 1) * C,
    )


def wls_fit(Z, weights, y, lam: float) -> np.ndarray:
    """Ridge WLS coefficients ``(Z^T W Z + lam I)^{-1} Z^T W y``.

    Solved through the SVD of ``W^{1/2} Z``; directions with singular values
    at rounding level are dropped, as in a pseudoinverse, so a design with an
    exact null space (centred features) does not amplify rounding by ``1/lam``.
    """
    Z = np.asarray(Z, dtype=float)
    root = np.sqrt(np.asarray(weights, dtype=float))
    U, sv, Vt = np.linalg.svd(root[:, None] * Z, full_matrices=False)
    keep = sv > max(Z.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    coef = np.where(keep, sv / (sv**2 + lam), 0.0)
    return Vt.T @ (coef * (U.T @ (root * np.asarray(y, dtype=float))))


def wls_ridge_estimate(oracle, spec: WLSSpec, law: CellLaw, m: int, lam: float | None = None, rng=None) -> EstimateReport:
    """Ridge WLS (KernelSHAP / LeverageSHAP style) for the Shapley value.

    The fit recovers the centred Shapley vector; the efficiency share
    ``(u([n]) - u(empty)) / n`` is added exactly.
    """
    n = spec.n
    if law.n != n:
        raise ValueError("law and spec disagree on n")
    lam = 1e-6 * (n - 1) / n * m if lam is None else float(lam)
    if not lam > 0:
        raise ValueError("ridge parameter must be positive")
    start = oracle.ledger.count
    masks, y = _draw(oracle, law, m, rng)
    q = prob(law, masks)
    if np.any((spec.weight(masks) > 0) & (q <= 0)):
        raise ValueError("weight support not contained in the law's support")
    beta = wls_fit(spec.feature(masks), spec.weight(masks) / q, y, lam)
    u_empty, u_full = oracle.evaluate_batch(np.array([0, full_mask(n)], dtype=np.uint64))
    phi = beta + (u_full - u_empty) / n
    est = spec.targets.apply(phi)
    return EstimateReport(est, oracle.ledger.count - start, "wls", law.snapshot(), config={"m": m, "lambda": lam})


def _fold_slices(m: int, B: int) -> list[np.ndarray]:
    if B < 2:
        raise ValueError("cross-fitting needs at least two folds")
    if m < B:
        raise ValueError(f"{m} samples cannot fill {B} folds")
    return np.array_split(np.arange(m), B)


def _stats_for(Omega, X, y, idx, p, loss, coord=None):
    if loss == "unweighted":
        om = np.ones((idx.size, 1))
    elif coord is None:
        om = Omega[idx]
    else:
        om = Omega[idx, coord : coord + 1]
    return SufficientStats(p, om.shape[1]).add_batch(om, X[idx], y[idx])


MIN_ROWS_PER_FEATURE = 2.0


def _fit_tier(stats, basis, lam, C):
    model = fit_profiled(stats, basis, lam) if C is None else fit_reduced(stats, basis, C, lam)
    return SurrogateModel.zero(basis) if model.ill_conditioned else model


def fit_surrogate(
    Omega, X, y, basis, idx=None, loss="efficient", shared=True, lam=None, extra=None,
    min_rows=MIN_ROWS_PER_FEATURE,
) -> SurrogateModel:
    """Fit on the rows ``idx``, shrinking the model when data is thin.

    Near the interpolation threshold (rows close to ``p``) a fitted surrogate
    inflates variance even when the system is well conditioned. The finest
    model of ``[basis] + basis.nested_maps()`` with at least ``min_rows`` rows
    per coefficient is fitted; if none qualifies, or the system is
    ill-conditioned, the zero surrogate is returned. Every tier keeps the
    estimate unbiased.

    ``extra`` holds additional statistics to pool into the fit: one
    :class:`SufficientStats` for a shared model, or a list with one entry
    per target otherwise.
    """
    idx = np.arange(y.size) if idx is None else idx
    pooled = 0 if extra is None else (extra.t if isinstance(extra, SufficientStats) else extra[0].t)
    rows = idx.size + pooled
    tiers = [(basis.p, None)] + [(C.shape[1], C) for C in basis.nested_maps()]
    C = next((c for k, c in tiers if rows >= max(min_rows * k, 1)), False)
    if C is False:
        return SurrogateModel.zero(basis)
    if shared or loss == "unweighted":
        stats = _stats_for(Omega, X, y, idx, basis.p, loss)
        if extra is not None:
            stats = SufficientStats.sum([stats, extra])
        return _fit_tier(stats, basis, lam, C)
    betas = []
    for j in range(Omega.shape[1]):
        stats = _stats_for(Omega, X, y, idx, basis.p, loss, coord=j)
        if extra is not None:
            stats = SufficientStats.sum([stats, extra[j]])
        betas.append(_fit_tier(stats, basis, lam, C).beta)
    return SurrogateModel(basis, np.array(betas))


def _surrogate_rows(model: SurrogateModel, X):
    out = X @ model.beta if model.shared else X @ model.beta.T
    return np.asarray(out)


def interior_tau(model: SurrogateModel, family, targets) -> np.ndarray:
    """``tau_A(h)`` restricted to interior coalitions.

    The residual correction only sees sizes 1..n-1 while the endpoints of
    ``u`` are added exactly, so the surrogate's own endpoint share must be
    removed from its closed-form value.
    """
    n = family.n
    c_full, c_empty = family.endpoint_weights()
    h = np.asarray(model(np.array([0, full_mask(n)], dtype=np.uint64)))
    ends = c_full * h[1] + c_empty * h[0]
    return tau_vector(model, family, targets) - ends * targets.A.sum(axis=0)


def aipw_scores(model, Omega, X, y, tau_h):
    """Per-observation AIPW scores ``tau(h) + omega (y - h)``: shape (m, d)."""
    h = _surrogate_rows(model, X)
    resid = y[:, None] - (h[:, None] if h.ndim == 1 else h)
    return tau_h[None, :] + Omega * resid


def cross_fit(
    Omega, X, y, basis, family, targets, folds=2, loss="efficient", shared=True, lam=None, extra_stats=None,
    min_rows=MIN_ROWS_PER_FEATURE,
):
    """Cross-fitted AIPW: returns ``(estimate, fold_estimates, models)``.

    For each fold the surrogate is fitted on the other folds and the residual
    correction is averaged on the held-out fold; fold estimates are combined
    with weights ``|I_b| / m``.
    """
    m = y.size
    slices = _fold_slices(m, folds)
    est = np.zeros(Omega.shape[1])
    fold_est, models = [], []
    for b, held in enumerate(slices):
        train = np.concatenate([s for c, s in enumerate(slices) if c != b])
        model = fit_surrogate(Omega, X, y, basis, train, loss, shared, lam, extra_stats, min_rows)
        tau_h = interior_tau(model, family, targets)
        fb = aipw_scores(model, Omega[held], X[held], y[held], tau_h).mean(axis=0)
        fold_est.append(fb)
        models.append(model)
        est += held.size / m * fb
    return est, fold_est, models


def aipw_estimate(
    oracle,
    family,
    targets,
    law: CellLaw,
    basis: FeatureBasis | str,
    m: int,
    folds: int = 2,
    rng=None,
    surrogate: SurrogateModel | None = None,
    loss: str = "efficient",
    shared: bool = True,
    lam: float | None = None,
    min_rows: float = MIN_ROWS_PER_FEATURE,
) -> EstimateReport:
    """Surrogate-adjusted (AIPW) estimator.

    With ``surrogate`` given, the fixed model is used on all samples and no
    fitting happens. Otherwise the surrogate is cross-fitted over ``folds``
    folds using the efficiency-aware profiled loss, or the plain squared loss
    ``sum (y - h)^2`` when ``loss="unweighted"``.
    """
    targets = _targets(family, targets)
    _check_support(law, family, targets)
    if loss not in ("efficient", "unweighted"):
        raise ValueError(f"unknown surrogate loss {loss!r}")
    if isinstance(basis, str):
        basis = FeatureBasis(basis, family.n)
    if surrogate is None:
        _fold_slices(m, folds)
    start = oracle.ledger.count
    masks, y = _draw(oracle, law, m, rng)
    Omega = rho_vector(family, targets, masks) / prob(law, masks)[:, None]
    X = (surrogate.basis if surrogate is not None else basis).matrix(masks)
    if surrogate is not None:
        tau_h = interior_tau(surrogate, family, targets)
        est = aipw_scores(surrogate, Omega, X, y, tau_h).mean(axis=0)
        fold_est = []
    else:
        est, fold_est, _ = cross_fit(Omega, X, y, basis, family, targets, folds, loss, shared, lam, min_rows=min_rows)
    est = est + endpoint_term(oracle, family, targets)
    cfg = {"m": m, "folds": folds, "loss": loss, "basis": basis.kind if surrogate is None else "fixed"}
    return EstimateReport(est, oracle.ledger.count - start, "aipw", law.snapshot(), fold_est, cfg)


def pair_design(oracle, family, targets, law, basis, masks):
    """Evaluate complement pairs; returns ``(Omega, dX, dy, rho_A)`` for pair scores."""
    n = family.n
    comp = complement(masks, n)
    vals = oracle.evaluate_batch(np.concatenate([masks, comp]))
    y, yc = vals[: masks.size], vals[masks.size :]
    qp = pair_mass(law, masks)
    rhoA = rho_vector(family, targets, masks)
    if np.any((qp <= 0) & np.any(rhoA != 0, axis=1)):
        raise ValueError("pair mass is zero on a contributing pair")
    Omega = rhoA / qp[:, None]
    dX = basis.matrix(masks) - basis.matrix(comp)
    return Omega, dX, y - yc, rhoA


def _require_symmetric(family):
    if not family.is_sign_symmetric:
        raise ValueError(f"complement-pair estimation needs a sign-symmetric family, got {family.name}")


def pair_aipw_estimate(
    oracle, family, targets, law: CellLaw, basis, m: int, folds: int = 2, rng=None,
    surrogate: SurrogateModel | None = None, lam: float | None = None, min_rows: float = MIN_ROWS_PER_FEATURE,
) -> EstimateReport:
    """Complement-pair AIPW with the Rao-Blackwellised pair weighting.

    Each draw ``S ~ q`` reveals ``u(S)`` and ``u(S^c)`` and contributes
    ``tau_A(h) + rho_A(S) * (r(S) - r(S^c)) / (q(S) + q(S^c))`` with
    ``r = u - h``. Costs ``2 m`` queries plus two for the endpoints.
    """
    _require_symmetric(family)
    targets = _targets(family, targets)
    _check_support(law, family, targets)
    if isinstance(basis, str):
        basis = FeatureBasis(basis, family.n)
    if surrogate is None:
        _fold_slices(m, folds)
    start = oracle.ledger.count
    masks = sample(law, rng, m)
    Omega, dX, dy, _ = pair_design(oracle, family, targets, law, surrogate.basis if surrogate else basis, masks)
    if surrogate is not None:
        est = aipw_scores(surrogate, Omega, dX, dy, interior_tau(surrogate, family, targets)).mean(axis=0)
        fold_est = []
    else:
        est, fold_est, _ = cross_fit(Omega, dX, dy, basis, family, targets, folds, lam=lam, min_rows=min_rows)
    est = est + endpoint_term(oracle, family, targets)
    return EstimateReport(est, oracle.ledger.count - start, "pair-aipw", law.snapshot(), fold_est, {"pairs": m, "folds": folds})


def _edge_size_law(family: SemivalueFamily, size_probs):
    if size_probs is None:
        return family.size_mass() / family.size_mass().sum()
    size_probs = np.asarray(size_probs, dtype=float)
    if size_probs.shape != (family.n,) or np.any(size_probs < 0):
        raise ValueError("edge law needs nonnegative probabilities for sizes 0..n-1")
    if np.any((family.alphas > 0) & (size_probs <= 0)):
        raise ValueError("edge law puts zero mass where the semivalue weight is positive")
    return size_probs / size_probs.sum()


def _edge_draws(oracle, family, i, probs, m, rng):
    n = family.n
    sizes = np.minimum(np.searchsorted(np.cumsum(probs) / probs.sum(), rng.random(m), side="right"), n - 1)
    base = random_subsets(rng, n, sizes, forbid=i)
    vals = oracle.evaluate_batch(np.concatenate([base, base | np.uint64(1 << i)]))
    marg = vals[m:] - vals[:m]
    q = probs[sizes] / binom_table(n - 1)[sizes]
    return family.alphas[sizes] / q * marg


def edge_lift_estimate(oracle, family: SemivalueFamily, i: int, m: int, rng, size_probs=None) -> float:
    """Edge-pair (sampling-lift) estimate of player ``i``'s value.

    ``size_probs[s]`` is the probability that the base coalition (drawn from
    the other ``n - 1`` players) has size ``s``; coalitions of equal size are
    equally likely. The default is the semivalue's own size law, which makes
    each draw an unweighted marginal contribution.
    """
    if m < 1:
        raise ValueError("need at least one draw")
    probs = _edge_size_law(family, size_probs)
    return float(np.mean(_edge_draws(oracle, family, i, probs, m, rng)))


def edge_lift_vector(oracle, family, targets, m_total: int, rng, size_probs=None) -> EstimateReport:
    """Edge-lift for all players, spreading ``m_total`` draws round-robin."""
    targets = _targets(family, targets)
    n = family.n
    probs = _edge_size_law(family, size_probs)
    per = np.full(n, m_total // n)
    per[: m_total % n] += 1
    start = oracle.ledger.count
    phi = np.zeros(n)
    for i in range(n):
        if per[i]:
            phi[i] = np.mean(_edge_draws(oracle, family, i, probs, int(per[i]), rng))
    est = targets.apply(phi)
    return EstimateReport(est, oracle.ledger.count - start, "edge-lift", None, config={"draws": m_total})
