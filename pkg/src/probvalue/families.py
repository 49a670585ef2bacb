"""Size-dependent semivalue families and their weighted-average coefficients.

A semivalue is described by per-size weights ``alphas[s]`` for ``s = 0..n-1``:
the value of player ``i`` is ``sum_{S not containing i} alphas[|S|] *
(u(S + i) - u(S))``. Weights are normalised so that
``sum_s C(n-1, s) * alphas[s] == 1``.

Players are 0-based throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, gammaln

from probvalue._bits import binom_table, check_n, masks_to_bool, popcount

__all__ = [
    "SemivalueFamily",
    "TargetSpec",
    "make_family",
    "parse_family",
    "rho",
    "rho_matrix",
    "rho_vector",
    "unanimity_values",
    "unanimity_size_coefficients",
]


@dataclass(frozen=True)
class SemivalueFamily:
    """Per-size semivalue weights for ``n`` players.

    ``kind`` is one of ``"shapley"``, ``"beta"`` or ``"banzhaf"``; ``params``
    holds ``(a, b)`` for Beta Shapley and ``(p,)`` for weighted Banzhaf.
    """

    kind: str
    n: int
    alphas: np.ndarray = field(repr=False)
    params: tuple = ()

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float)
        if alphas.shape != (self.n,):
            raise ValueError(f"expected {self.n} weights, got shape {alphas.shape}")
        if np.any(alphas < 0):
            raise ValueError("semivalue weights must be nonnegative")
        total = float(np.dot(binom_table(self.n - 1), alphas))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights are not normalised (sum = {total!r})")
        alphas.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)

    @property
    def name(self) -> str:
        if self.kind == "shapley":
            return "shapley"
        if self.kind == "beta":
            return "beta:{:g},{:g}".format(*self.params)
        return "banzhaf:{:g}".format(*self.params)

    @property
    def is_sign_symmetric(self) -> bool:
        """True when ``rho_i(S^c) == -rho_i(S)``, i.e. ``alphas`` is a palindrome."""
        a = self.alphas
        return bool(np.allclose(a, a[::-1], rtol=1e-12, atol=0.0))

    def size_mass(self) -> np.ndarray:
        """``C(n-1, s) * alphas[s]``: the law of ``|S|`` in the marginal-contribution average."""
        return binom_table(self.n - 1) * self.alphas

    def endpoint_weights(self) -> tuple[float, float]:
        """Coefficients of ``u([n])`` and ``u(empty)`` in every player's value."""
        return float(self.alphas[-1]), float(-self.alphas[0])


def _shapley_alphas(n: int) -> np.ndarray:
    return 1.0 / (n * binom_table(n - 1))


def _banzhaf_alphas(n: int, p: float) -> np.ndarray:
    s = np.arange(n)
    # log space keeps p^s (1-p)^(n-1-s) accurate for extreme p at n = 64
    return np.exp(s * math.log(p) + (n - 1 - s) * math.log1p(-p))


def _beta_alphas(n: int, a: float, b: float) -> np.ndarray:
    s = np.arange(n)
    log_w = betaln(b + s, a + n - 1 - s)
    log_binom = gammaln(n) - gammaln(s + 1) - gammaln(n - s)
    log_total = np.logaddexp.reduce(log_binom + log_w)
    return np.exp(log_w - log_total)


def make_family(kind: str, n: int, *params) -> SemivalueFamily:
    """Build a semivalue family.

    >>> make_family("shapley", 3).alphas.round(4)
    array([0.3333, 0.1667, 0.3333])

    ``make_family("beta", n, a, b)`` weights coalition size ``s`` by
    ``Beta(b + s, a + n - 1 - s)`` (renormalised), so ``(1, 1)`` is Shapley and
    ``a > b`` favours small coalitions. ``make_family("banzhaf", n, p)`` gives
    the weighted Banzhaf value with inclusion probability ``p``.
    """
    n = check_n(n)
    kind = kind.lower()
    if kind == "shapley":
        if params:
            raise ValueError("shapley takes no parameters")
        alphas = _shapley_alphas(n)
    elif kind in ("beta", "beta-shapley"):
        if len(params) != 2:
            raise ValueError("beta shapley needs two parameters (a, b)")
        a, b = (float(x) for x in params)
        if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
            raise ValueError(f"beta parameters must be positive, got {params}")
        alphas = _beta_alphas(n, a, b)
        kind, params = "beta", (a, b)
    elif kind in ("banzhaf", "weighted-banzhaf"):
        if len(params) != 1:
            raise ValueError("weighted banzhaf needs one parameter p")
        p = float(params[0])
        if not 0.0 < p < 1.0:
            raise ValueError(f"banzhaf parameter p must lie in (0, 1), got {p}")
        alphas = _banzhaf_alphas(n, p)
        kind, params = "banzhaf", (p,)
    else:
        raise ValueError(f"unknown semivalue family {kind!r}")
    # absorb rounding so the normalisation holds to the last few ulps
    alphas = alphas / float(np.dot(binom_table(n - 1), alphas))
    return SemivalueFamily(kind=kind, n=n, alphas=alphas, params=tuple(params))


def parse_family(spec: str, n: int) -> SemivalueFamily:
    """Parse config strings such as ``"shapley"``, ``"beta:4,1"``, ``"banzhaf:0.25"``."""
    head, _, tail = spec.strip().partition(":")
    args = [float(x) for x in tail.split(",")] if tail else []
    return make_family(head, n, *args)


@dataclass(frozen=True)
class TargetSpec:
    """Coefficient matrix ``A`` (n x d); the targets are ``A.T @ phi``."""

    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 1:
            A = A[:, None]
        if A.ndim != 2 or A.shape[1] < 1:
            raise ValueError("target matrix must be n x d with d >= 1")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @classmethod
    def identity(cls, n: int) -> "TargetSpec":
        return cls(np.eye(n))

    @classmethod
    def group(cls, n: int, members) -> "TargetSpec":
        a = np.zeros(n)
        a[list(members)] = 1.0
        return cls(a)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def is_identity(self) -> bool:
        return self.A.shape[0] == self.A.shape[1] and np.array_equal(self.A, np.eye(self.n))

    def apply(self, phi: np.ndarray) -> np.ndarray:
        """Map player values (n,) or (..., n) to targets."""
        if self.is_identity:
            return np.array(phi, dtype=float, copy=True)
        return np.asarray(phi) @ self.A


def rho(family: SemivalueFamily, i: int, members) -> float:
    """Weighted-average coefficient of ``u(S)`` in player ``i``'s value."""
    S = set(members)
    s = len(S)
    if i in S:
        return float(family.alphas[s - 1])
    if s <= family.n - 1:
        return float(-family.alphas[s])
    return 0.0


def rho_matrix(family: SemivalueFamily, masks) -> np.ndarray:
    """Per-player coefficients ``rho_i(S)`` for a batch of masks: shape (m, n)."""
    n = family.n
    members = masks_to_bool(masks, n)
    sizes = popcount(masks)
    a = family.alphas
    inside = a[np.clip(sizes - 1, 0, n - 1)]
    outside = np.where(sizes <= n - 1, a[np.clip(sizes, 0, n - 1)], 0.0)
    inside = np.where(sizes >= 1, inside, 0.0)
    return np.where(members, inside[:, None], -outside[:, None])


def rho_vector(family: SemivalueFamily, targets: TargetSpec, masks) -> np.ndarray:
    """``rho_A(S) = A.T rho(S)`` for a batch of masks: shape (m, d)."""
    return targets.apply(rho_matrix(family, masks))


def unanimity_size_coefficients(family: SemivalueFamily) -> np.ndarray:
    """``c[k]`` = value of each member of a size-``k`` unanimity game (k = 0..n).

    ``c[k] = sum_{s=k-1}^{n-1} C(n-k, s-k+1) * alphas[s]``; ``c[0]`` is unused.
    """
    n = family.n
    out = np.zeros(n + 1)
    for k in range(1, n + 1):
        s = np.arange(k - 1, n)
        out[k] = float(np.dot(binom_table(n - k)[s - k + 1], family.alphas[s]))
    return out


def unanimity_values(family: SemivalueFamily, n: int, members) -> np.ndarray:
    """Exact values of the unanimity game ``u(S) = 1(T subset of S)``."""
    T = sorted(set(int(i) for i in members))
    if not T:
        raise ValueError("unanimity coalition must be nonempty")
    if n != family.n:
        raise ValueError("family was built for a different player count")
    if T[0] < 0 or T[-1] >= n:
        raise ValueError("unanimity coalition has players outside [0, n)")
    phi = np.zeros(n)
    phi[T] = unanimity_size_coefficients(family)[len(T)]
    return phi
