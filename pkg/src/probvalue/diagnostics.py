"""Exact variance oracles by enumeration, error metrics and replication studies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from probvalue._bits import all_masks, masks_to_bool, popcount
from probvalue.families import SemivalueFamily, TargetSpec, rho_vector
from probvalue.game import Game
from probvalue.sampling import CellLaw, prob

__all__ = [
    "MAX_ENUM_PLAYERS",
    "ConvergenceCurve",
    "MSEStudy",
    "first_order_variance",
    "hajek_first_order_variance",
    "relative_sq_error",
    "aucc",
    "mse_study",
    "replication_rng",
]

MAX_ENUM_PLAYERS = 14


def _utility(oracle, masks, n: int) -> np.ndarray:
    if isinstance(oracle, Game):
        return oracle.evaluate_batch(masks, record=False)
    return np.array([float(oracle(row)) for row in masks_to_bool(masks, n)])


def _support(law: CellLaw):
    n = law.n
    if n > MAX_ENUM_PLAYERS:
        raise ValueError(f"exact enumeration is capped at n = {MAX_ENUM_PLAYERS}, got {n}")
    masks = all_masks(n)
    q = prob(law, masks)
    keep = q > 0
    return masks[keep], q[keep]


def _surrogate_values(surrogate, masks, d) -> np.ndarray:
    if surrogate is None:
        return np.zeros((masks.size, 1))
    h = np.asarray(surrogate(masks), dtype=float)
    return h[:, None] if h.ndim == 1 else h.reshape(masks.size, d)


def first_order_variance(oracle, family: SemivalueFamily, targets, law: CellLaw, surrogate=None) -> float:
    """``V(A; q, h) = sum_j Var_q[gamma_j (u - h_j)]`` by full enumeration.

    ``surrogate`` may be ``None`` (zero), a :class:`SurrogateModel` or any
    callable on mask arrays returning (m,) or (m, d).
    """
    targets = TargetSpec.identity(family.n) if targets is None else targets
    masks, q = _support(law)
    gamma = rho_vector(family, targets, masks) / q[:, None]
    resid = _utility(oracle, masks, law.n)[:, None] - _surrogate_values(surrogate, masks, targets.d)
    scores = gamma * resid
    mean = q @ scores
    return float(np.sum(q @ (scores - mean) ** 2))


def hajek_first_order_variance(oracle, family: SemivalueFamily, targets, law: CellLaw) -> float:
    """First-order variance of the per-player Hajek estimator.

    Cells split coalitions by size and by membership of each player; the
    influence of player ``i`` is ``gamma_i u`` centred within its cell, which
    for identity targets gives ``sum_i sum_k pi_k Var(gamma_i u | C_k)``.
    """
    n = family.n
    targets = TargetSpec.identity(n) if targets is None else targets
    masks, q = _support(law)
    u = _utility(oracle, masks, law.n)
    G = rho_vector(family, TargetSpec.identity(n), masks) / q[:, None] * u[:, None]
    key = 2 * popcount(masks)[:, None] + masks_to_bool(masks, n).astype(np.int64)
    infl = np.empty_like(G)
    for i in range(n):
        k = key[:, i]
        mass = np.bincount(k, weights=q, minlength=2 * n + 2)
        total = np.bincount(k, weights=q * G[:, i], minlength=2 * n + 2)
        cell_mean = np.divide(total, mass, out=np.zeros_like(total), where=mass > 0)
        infl[:, i] = G[:, i] - cell_mean[k]
    scores = infl if targets.is_identity else infl @ targets.A
    mean = q @ scores
    return float(np.sum(q @ (scores - mean) ** 2))


def relative_sq_error(estimate, exact) -> float:
    exact = np.asarray(exact, dtype=float)
    denom = float(exact @ exact)
    if denom <= 0:
        raise ValueError("relative error needs a nonzero exact vector")
    diff = np.asarray(estimate, dtype=float) - exact
    return float(diff @ diff) / denom


@dataclass(frozen=True)
class ConvergenceCurve:
    budgets: tuple
    errors: tuple
    method: str = ""
    seed: object = None

    def __post_init__(self):
        b = tuple(int(x) for x in self.budgets)
        e = tuple(float(x) for x in self.errors)
        if len(b) != len(e) or not b:
            raise ValueError("budgets and errors must be nonempty and aligned")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError("budgets must be strictly increasing")
        object.__setattr__(self, "budgets", b)
        object.__setattr__(self, "errors", e)


def aucc(curve: ConvergenceCurve) -> float:
    """Mean relative squared error over the tracked budgets."""
    return float(np.mean(curve.errors))


def replication_rng(master_seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(r,)))


@dataclass
class MSEStudy:
    mse: np.ndarray
    bias: np.ndarray
    variance: np.ndarray
    se_mse: np.ndarray
    se_mean: np.ndarray
    replications: int
    master_seed: int

    @property
    def total_mse(self) -> float:
        return float(np.sum(self.mse))

    @property
    def total_se(self) -> float:
        return float(np.sqrt(np.sum(self.se_mse**2)))


def mse_study(estimator: Callable, exact, replications: int, master_seed: int = 0) -> MSEStudy:
    """Replicate ``estimator(rng)`` with independent derived streams.

    ``estimator`` returns an estimate vector or an object with an
    ``estimates`` attribute. With a single replication variance and
    standard errors are NaN.
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    exact = np.asarray(exact, dtype=float)
    errs = np.empty((replications, exact.size))
    for r in range(replications):
        out = estimator(replication_rng(master_seed, r))
        errs[r] = np.asarray(getattr(out, "estimates", out), dtype=float) - exact
    sq = errs**2
    if replications == 1:
        nan = np.full(exact.size, np.nan)
        return MSEStudy(sq[0], errs[0], nan, nan.copy(), nan.copy(), 1, master_seed)
    root = np.sqrt(replications)
    return MSEStudy(
        mse=sq.mean(axis=0),
        bias=errs.mean(axis=0),
        variance=errs.var(axis=0, ddof=1),
        se_mse=sq.std(axis=0, ddof=1) / root,
        se_mean=errs.std(axis=0, ddof=1) / root,
        replications=replications,
        master_seed=master_seed,
    )
