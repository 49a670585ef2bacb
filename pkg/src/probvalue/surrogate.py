"""Linear surrogates with closed-form semivalues.

A surrogate is ``h(S) = x(S) @ beta`` for one of three feature bases:

* ``"fo"``    intercept, player indicators, ``log(1 + |S|)`` and ``(|S|/n)^2``;
* ``"sp"``    size-by-player indicators ``1(|S| = s and i in S)``, s = 1..n-1;
* ``"poly2"`` intercept plus unanimity indicators of all singletons and pairs.

Every basis function has an exact semivalue vector, collected in
:meth:`FeatureBasis.value_matrix`, so ``tau_A(h)`` costs no utility queries.

Coefficients are fitted by the profiled efficiency-aware least-squares
criterion ``min_{beta, mu} sum_t |omega_t (y_t - x_t beta) - mu|^2 + lam |beta|^2``
through four additive sufficient statistics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from probvalue._bits import binom_table, check_n, masks_to_bool, popcount
from probvalue.families import SemivalueFamily, TargetSpec, unanimity_size_coefficients

__all__ = [
    "FeatureBasis",
    "SurrogateModel",
    "SufficientStats",
    "features",
    "accumulate",
    "fit_profiled",
    "fit_reduced",
    "solve_profiled",
    "profiled_loss",
    "tau_vector",
    "evaluate_surrogate",
    "ConditioningWarning",
]

BASES = ("fo", "sp", "poly2")
COND_LIMIT = 1e12


class ConditioningWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class FeatureBasis:
    kind: str
    n: int

    def __post_init__(self):
        check_n(self.n)
        if self.kind not in BASES:
            raise ValueError(f"unknown basis {self.kind!r}; expected one of {BASES}")

    @property
    def p(self) -> int:
        n = self.n
        if self.kind == "fo":
            return n + 3
        if self.kind == "sp":
            return n * (n - 1)
        return 1 + n + n * (n - 1) // 2

    @property
    def sparse(self) -> bool:
        return self.kind == "sp"

    def descriptors(self) -> list[str]:
        n = self.n
        if self.kind == "fo":
            return ["1"] + [f"x{i}" for i in range(n)] + ["log1p(|S|)", "(|S|/n)^2"]
        if self.kind == "sp":
            return [f"|S|={s},x{i}" for s in range(1, n) for i in range(n)]
        return ["1"] + [f"x{i}" for i in range(n)] + [
            f"x{i}x{j}" for i in range(n) for j in range(i + 1, n)
        ]

    def nested_maps(self) -> list[np.ndarray]:
        """Maps ``C`` (p x p_c) onto smaller sub-models, finest first.

        Each column of ``C`` is a function in the span of this basis on
        interior coalitions, so ``x(S) @ C @ b`` is still a model of the same
        class. The last map keeps only smooth functions of ``|S|``.
        """
        n, p = self.n, self.p
        if self.kind == "fo":
            C = np.zeros((p, 3))
            C[[0, n + 1, n + 2], [0, 1, 2]] = 1.0
            return [C]
        if self.kind == "sp":
            # block s holds 1(|S| = s, i in S); a size function g(s) is g(s)/s on
            # every player of block s, and 1(i in S) is player i across blocks
            s = np.arange(p) // n + 1
            player = np.arange(p) % n
            size_cols = np.column_stack([1.0 / s, np.log1p(s) / s, (s / n) ** 2 / s])
            fo_span = np.zeros((p, n + 3))
            fo_span[:, 0] = size_cols[:, 0]
            fo_span[np.arange(p), 1 + player] = 1.0
            fo_span[:, n + 1 :] = size_cols[:, 1:]
            return [fo_span, size_cols]
        # intercept, sum of singletons (|S|), sum of pairs (C(|S|, 2))
        C = np.zeros((p, 3))
        C[0, 0] = 1.0
        C[1 : n + 1, 1] = 1.0
        C[n + 1 :, 2] = 1.0
        return [C]

    def matrix(self, masks):
        """Design matrix for a batch of masks (scipy CSR for ``"sp"``)."""
        masks = np.asarray(masks, dtype=np.uint64).reshape(-1)
        n = self.n
        X = masks_to_bool(masks, n)
        sizes = popcount(masks)
        m = masks.size
        if self.kind == "fo":
            out = np.empty((m, n + 3))
            out[:, 0] = 1.0
            out[:, 1 : n + 1] = X
            out[:, n + 1] = np.log1p(sizes)
            out[:, n + 2] = (sizes / n) ** 2
            return out
        if self.kind == "sp":
            rows, cols = np.nonzero(X)
            s = sizes[rows]
            keep = (s >= 1) & (s <= n - 1)
            rows, cols, s = rows[keep], cols[keep], s[keep]
            data = np.ones(rows.size)
            return sp.csr_matrix((data, (rows, (s - 1) * n + cols)), shape=(m, self.p))
        iu, ju = _pair_index(n)
        Xf = X.astype(float)
        return np.hstack([np.ones((m, 1)), Xf, Xf[:, iu] * Xf[:, ju]])

    def value_matrix(self, family: SemivalueFamily) -> np.ndarray:
        """``(p, n)`` matrix whose row ``b`` is the semivalue vector of feature ``b``."""
        if family.n != self.n:
            raise ValueError("family and basis disagree on n")
        return _value_matrix(self.kind, self.n, family.kind, family.params, family.alphas.tobytes())


@lru_cache(maxsize=None)
def _pair_index(n: int):
    iu, ju = np.triu_indices(n, k=1)
    return iu, ju


def _size_feature_value(family: SemivalueFamily, g) -> float:
    n = family.n
    s = np.arange(n)
    return float(np.dot(family.size_mass(), g(s + 1) - g(s)))


@lru_cache(maxsize=64)
def _value_matrix(kind, n, fam_kind, fam_params, alpha_bytes) -> np.ndarray:
    alphas = np.frombuffer(alpha_bytes, dtype=float)
    family = SemivalueFamily(fam_kind, n, alphas.copy(), fam_params)
    if kind == "fo":
        V = np.zeros((n + 3, n))
        V[1 : n + 1] = np.eye(n)
        V[n + 1] = _size_feature_value(family, lambda s: np.log1p(s))
        V[n + 2] = _size_feature_value(family, lambda s: (s / n) ** 2)
        return V
    if kind == "sp":
        a = family.alphas
        b1 = binom_table(n - 1)
        b2 = binom_table(n - 2) if n >= 2 else np.zeros(1)
        V = np.zeros((n * (n - 1), n))
        for s in range(1, n):
            own = b1[s - 1] * a[s - 1]
            # other players: gain when S has size s-1 and contains the owner,
            # loss when S already has size s and contains the owner
            gain = b2[s - 2] * a[s - 1] if s >= 2 else 0.0
            loss = b2[s - 1] * a[s] if s - 1 <= n - 2 else 0.0
            block = np.full((n, n), gain - loss)
            np.fill_diagonal(block, own)
            V[(s - 1) * n : s * n] = block
        return V
    c = unanimity_size_coefficients(family)
    iu, ju = _pair_index(n)
    V = np.zeros((1 + n + iu.size, n))
    V[1 : n + 1] = np.eye(n) * c[1]
    rows = np.arange(iu.size) + 1 + n
    V[rows, iu] = c[2]
    V[rows, ju] = c[2]
    return V


def features(basis: FeatureBasis, masks) -> np.ndarray:
    """Dense feature vectors ``x(S)``: shape (p,) for one mask, (m, p) for many."""
    one = np.ndim(masks) == 0
    X = basis.matrix(np.atleast_1d(masks))
    if sp.issparse(X):
        X = X.toarray()
    return X[0] if one else X


@dataclass
class SurrogateModel:
    """``h(S) = x(S) @ beta``; ``beta`` is (p,) if shared or (d, p) per target."""

    basis: FeatureBasis
    beta: np.ndarray
    mu: np.ndarray | None = None
    ill_conditioned: bool = False
    cond: float = float("nan")

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if self.beta.shape[-1] != self.basis.p:
            raise ValueError("coefficient length does not match the basis")
        if not np.all(np.isfinite(self.beta)):
            raise ValueError("surrogate coefficients must be finite")

    @property
    def shared(self) -> bool:
        return self.beta.ndim == 1

    @classmethod
    def zero(cls, basis: FeatureBasis) -> "SurrogateModel":
        return cls(basis, np.zeros(basis.p))

    def __call__(self, masks):
        return evaluate_surrogate(self, masks)


def evaluate_surrogate(model: SurrogateModel, masks):
    """``x(S) @ beta``; (m,) for a shared model, (m, d) per-target."""
    one = np.ndim(masks) == 0
    X = model.basis.matrix(np.atleast_1d(masks))
    out = X @ model.beta if model.shared else X @ model.beta.T
    out = np.asarray(out)
    return out[0] if one else out


def tau_vector(model: SurrogateModel, family: SemivalueFamily, targets: TargetSpec | None = None) -> np.ndarray:
    """Exact targets ``A.T phi(h)`` of the surrogate."""
    targets = TargetSpec.identity(family.n) if targets is None else targets
    V = model.basis.value_matrix(family)
    if model.shared:
        return targets.apply(model.beta @ V)
    phi = model.beta @ V  # (d, n): values of each coordinate's surrogate
    return np.einsum("nd,dn->d", targets.A, phi)


class SufficientStats:
    """Additive statistics ``R, d, U, v, t`` of the profiled objective.

    ``R = sum a x x^T`` and ``d = sum a x y`` with ``a = |omega|^2``;
    ``U = sum omega x^T`` and ``v = sum omega y``.
    """

    def __init__(self, p: int, d: int):
        self.R = np.zeros((p, p))
        self.dvec = np.zeros(p)
        self.U = np.zeros((d, p))
        self.vvec = np.zeros(d)
        self.t = 0

    @property
    def p(self) -> int:
        return self.R.shape[0]

    @property
    def d(self) -> int:
        return self.U.shape[0]

    def add(self, omega, x, y) -> "SufficientStats":
        omega = np.asarray(omega, dtype=float).reshape(-1)
        x = np.asarray(x, dtype=float).reshape(-1)
        a = float(omega @ omega)
        self.R += a * np.outer(x, x)
        self.dvec += a * y * x
        self.U += np.outer(omega, x)
        self.vvec += omega * y
        self.t += 1
        return self

    def add_batch(self, Omega, X, y) -> "SufficientStats":
        """Accumulate many observations; ``X`` may be dense or scipy sparse."""
        Omega = np.asarray(Omega, dtype=float)
        if Omega.ndim == 1:
            Omega = Omega[:, None]
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.size == 0:
            return self
        a = np.einsum("ij,ij->i", Omega, Omega)
        if sp.issparse(X):
            Xa = sp.diags(a) @ X
            self.R += (X.T @ Xa).toarray()
            self.dvec += np.asarray(Xa.T @ y).reshape(-1)
            self.U += np.asarray((X.T @ Omega).T)
        else:
            X = np.asarray(X, dtype=float)
            self.R += X.T @ (a[:, None] * X)
            self.dvec += X.T @ (a * y)
            self.U += Omega.T @ X
        self.vvec += Omega.T @ y
        self.t += y.size
        return self

    def merge(self, other: "SufficientStats") -> "SufficientStats":
        out = self.copy()
        out.R += other.R
        out.dvec += other.dvec
        out.U += other.U
        out.vvec += other.vvec
        out.t += other.t
        return out

    def copy(self) -> "SufficientStats":
        out = SufficientStats(self.p, self.d)
        out.R = self.R.copy()
        out.dvec = self.dvec.copy()
        out.U = self.U.copy()
        out.vvec = self.vvec.copy()
        out.t = self.t
        return out

    def project(self, C) -> "SufficientStats":
        """Statistics of the reduced features ``x @ C``."""
        C = np.asarray(C, dtype=float)
        out = SufficientStats(C.shape[1], self.d)
        out.R = C.T @ self.R @ C
        out.dvec = C.T @ self.dvec
        out.U = self.U @ C
        out.vvec = self.vvec.copy()
        out.t = self.t
        return out

    @classmethod
    def sum(cls, parts) -> "SufficientStats":
        parts = list(parts)
        out = parts[0].copy()
        for other in parts[1:]:
            out = out.merge(other)
        return out


def accumulate(stats: SufficientStats, omega, x, y) -> SufficientStats:
    """Add one observation in place and return ``stats``."""
    return stats.add(omega, x, y)


def default_ridge(stats: SufficientStats) -> float:
    return 1e-8 * float(np.trace(stats.R)) / stats.p + 1e-12


def solve_profiled(stats: SufficientStats, lam: float | None = None):
    """Solve ``(R - U^T U / t + lam I) beta = d - U^T v / t``.

    Returns ``(beta, mu, cond, ill_conditioned)`` where
    ``mu = (v - U beta) / t``.
    """
    if stats.t < 1:
        raise ValueError("need at least one observation to fit")
    lam = default_ridge(stats) if lam is None else float(lam)
    if not lam > 0:
        raise ValueError("ridge parameter must be positive")
    t = stats.t
    H = stats.R - stats.U.T @ stats.U / t
    H = 0.5 * (H + H.T)
    H[np.diag_indices_from(H)] += lam
    rhs = stats.dvec - stats.U.T @ stats.vvec / t
    try:
        factor = scipy.linalg.cho_factor(H, lower=True, check_finite=False)
        beta = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        diag = np.abs(np.diag(factor[0]))
        cond = float((diag.max() / diag.min()) ** 2) if diag.min() > 0 else np.inf
    except np.linalg.LinAlgError:
        w, Q = np.linalg.eigh(H)
        cond = float(w.max() / w.min()) if w.min() > 0 else np.inf
        beta = Q @ ((Q.T @ rhs) / np.where(w > 0, w, np.inf))
    bad = not np.isfinite(cond) or cond > COND_LIMIT or not np.all(np.isfinite(beta))
    if bad:
        warnings.warn(f"profiled surrogate system is ill-conditioned (cond ~ {cond:.3g})", ConditioningWarning, stacklevel=3)
        beta = np.where(np.isfinite(beta), beta, 0.0)
    mu = (stats.vvec - stats.U @ beta) / t
    return beta, mu, cond, bad


def fit_profiled(stats: SufficientStats, basis: FeatureBasis, lam: float | None = None) -> SurrogateModel:
    """Profiled efficiency-aware least squares on the full basis.

    The fitted model carries ``mu`` and a condition estimate; a
    :class:`ConditioningWarning` is issued above ``1e12``.
    """
    if stats.p != basis.p:
        raise ValueError("statistics and basis disagree on the feature count")
    beta, mu, cond, bad = solve_profiled(stats, lam)
    return SurrogateModel(basis, beta, mu=mu, ill_conditioned=bad, cond=cond)


def fit_reduced(stats: SufficientStats, basis: FeatureBasis, C, lam: float | None = None) -> SurrogateModel:
    """Fit the sub-model ``beta = C @ b`` (see :meth:`FeatureBasis.nested_maps`)."""
    if stats.p != basis.p:
        raise ValueError("statistics and basis disagree on the feature count")
    beta, mu, cond, bad = solve_profiled(stats.project(C), lam)
    return SurrogateModel(basis, C @ beta, mu=mu, ill_conditioned=bad, cond=cond)


def profiled_loss(beta, Omega, X, y, lam: float = 0.0) -> float:
    """``min_mu sum_t |omega_t (y_t - x_t beta) - mu|^2 + lam |beta|^2``, evaluated directly."""
    Omega = np.asarray(Omega, dtype=float)
    if Omega.ndim == 1:
        Omega = Omega[:, None]
    X = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)
    resid = np.asarray(y, dtype=float) - X @ np.asarray(beta, dtype=float)
    scores = Omega * resid[:, None]
    centred = scores - scores.mean(axis=0)
    return float(np.sum(centred**2) + lam * np.dot(beta, beta))
