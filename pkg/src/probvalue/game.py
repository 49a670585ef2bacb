"""Utility oracles, query accounting and exact ground truth.

Two kinds of games are provided: :class:`SOUGame`, a sum of unanimity games
with closed-form semivalues, and :class:`UtilityOracle`, which wraps an
arbitrary Python set function. Both expose the same batch interface used by
the estimators: ``evaluate_batch(masks) -> values`` with every call recorded
in a :class:`QueryLedger`.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from probvalue._bits import (
    all_masks,
    bool_to_masks,
    check_n,
    full_mask,
    masks_to_bool,
    popcount,
    random_subsets,
)
from probvalue.families import SemivalueFamily, unanimity_size_coefficients

__all__ = [
    "Coalition",
    "QueryLedger",
    "Game",
    "SOUGame",
    "UtilityOracle",
    "sou_generate",
    "exact_sou_values",
    "brute_force_values",
]


@dataclass(frozen=True)
class Coalition:
    """A subset of ``{0, ..., n-1}`` stored as a bitmask."""

    mask: int
    n: int

    def __post_init__(self):
        check_n(self.n)
        if self.mask < 0 or self.mask >> self.n:
            raise ValueError(f"mask {self.mask:#x} has bits outside the {self.n} players")

    @classmethod
    def from_members(cls, members: Iterable[int], n: int) -> "Coalition":
        mask = 0
        for i in members:
            if not 0 <= int(i) < n:
                raise ValueError(f"player {i} outside [0, {n})")
            mask |= 1 << int(i)
        return cls(mask, n)

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.mask >> i & 1)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    def complement(self) -> "Coalition":
        return Coalition(self.mask ^ full_mask(self.n), self.n)

    def __contains__(self, i: int) -> bool:
        return bool(self.mask >> int(i) & 1)

    def __len__(self) -> int:
        return self.size


class QueryLedger:
    """Counts utility evaluations.

    In ``"raw"`` mode every evaluated coalition counts once per call. In
    ``"cache"`` mode only the first evaluation of each distinct mask counts.
    Increments are guarded by a lock so a ledger can be shared by threads.
    """

    def __init__(self, mode: str = "raw"):
        if mode not in ("raw", "cache"):
            raise ValueError(f"ledger mode must be 'raw' or 'cache', got {mode!r}")
        self.mode = mode
        self._count = 0
        self._seen: set[int] = set()
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    def record(self, masks) -> int:
        """Record a batch of evaluations; returns the increment."""
        masks = np.asarray(masks, dtype=np.uint64).reshape(-1)
        with self._lock:
            if self.mode == "raw":
                inc = int(masks.size)
            else:
                fresh = set(int(x) for x in np.unique(masks)) - self._seen
                self._seen |= fresh
                inc = len(fresh)
            self._count += inc
        return inc

    def merge(self, other: "QueryLedger") -> None:
        with self._lock:
            self._count += other._count
            self._seen |= other._seen

    def reset(self) -> None:
        with self._lock:
            self._count = 0
            self._seen.clear()

    def __repr__(self):
        return f"QueryLedger(mode={self.mode!r}, count={self._count})"


class Game:
    """Base class: subclasses implement :meth:`_values` on uint64 masks."""

    def __init__(self, n: int, ledger: QueryLedger | None = None):
        self.n = check_n(n)
        self.ledger = ledger if ledger is not None else QueryLedger()

    def _values(self, masks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate_batch(self, masks, record: bool = True) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.uint64).reshape(-1)
        if masks.size and int(masks.max()) >> self.n:
            raise ValueError("coalition mask has bits outside the player set")
        if record:
            self.ledger.record(masks)
        return self._values(masks)

    def evaluate(self, S: Coalition | Iterable[int]) -> float:
        if isinstance(S, Coalition):
            if S.n != self.n:
                raise ValueError(f"coalition is over {S.n} players, game has {self.n}")
            mask = S.mask
        else:
            mask = Coalition.from_members(S, self.n).mask
        return float(self.evaluate_batch(np.array([mask], dtype=np.uint64))[0])

    __call__ = evaluate

    def clone(self, ledger_mode: str | None = None) -> "Game":
        raise NotImplementedError


class UtilityOracle(Game):
    """Wrap a set function as a counted oracle.

    ``func`` receives a boolean membership vector of length ``n`` (or, with
    ``vectorized=True``, an ``(m, n)`` matrix and must return ``m`` values).
    With ``ledger_mode="cache"`` values are memoised and the ledger counts
    distinct coalitions.
    """

    def __init__(self, func: Callable, n: int, vectorized: bool = False, ledger_mode: str = "raw"):
        super().__init__(n, QueryLedger(ledger_mode))
        self.func = func
        self.vectorized = vectorized
        self._memo: dict[int, float] | None = {} if ledger_mode == "cache" else None

    def _compute(self, masks: np.ndarray) -> np.ndarray:
        members = masks_to_bool(masks, self.n)
        if self.vectorized:
            return np.asarray(self.func(members), dtype=float).reshape(-1)
        return np.array([float(self.func(row)) for row in members], dtype=float)

    def _values(self, masks):
        if self._memo is None:
            return self._compute(masks)
        missing = np.array([x for x in np.unique(masks) if int(x) not in self._memo], dtype=np.uint64)
        if missing.size:
            for key, val in zip(missing, self._compute(missing)):
                self._memo[int(key)] = float(val)
        return np.array([self._memo[int(x)] for x in masks], dtype=float)

    def clone(self, ledger_mode=None):
        return UtilityOracle(self.func, self.n, self.vectorized, ledger_mode or self.ledger.mode)


class SOUGame(Game):
    """Sum of unanimity games ``u(S) = sum_k theta_k * 1(T_k subset of S)``.

    ``term_masks`` may contain repeats (the term list is a multiset).
    """

    _CHUNK = 2048

    def __init__(self, n: int, term_masks, thetas, ledger_mode: str = "raw"):
        super().__init__(n, QueryLedger(ledger_mode))
        term_masks = np.asarray(term_masks, dtype=np.uint64).reshape(-1)
        thetas = np.asarray(thetas, dtype=float).reshape(-1)
        if term_masks.shape != thetas.shape:
            raise ValueError("need one coefficient per term")
        if np.any(term_masks == 0):
            raise ValueError("unanimity terms must be nonempty coalitions")
        if term_masks.size and int(term_masks.max()) >> self.n:
            raise ValueError("term has players outside [0, n)")
        for arr in (term_masks, thetas):
            arr.setflags(write=False)
        self.term_masks = term_masks
        self.thetas = thetas
        self.term_sizes = popcount(term_masks)
        # float32 keeps member counts exact (<= 64) and halves matmul cost
        self._incidence = masks_to_bool(term_masks, self.n).astype(np.float32).T.copy()
        self._sizes32 = self.term_sizes.astype(np.float32)

    @property
    def terms(self) -> list[tuple[tuple[int, ...], float]]:
        return [
            (Coalition(int(t), self.n).members, float(th))
            for t, th in zip(self.term_masks, self.thetas)
        ]

    def _values(self, masks):
        out = np.empty(masks.size, dtype=float)
        for lo in range(0, masks.size, self._CHUNK):
            block = masks[lo : lo + self._CHUNK]
            X = masks_to_bool(block, self.n).astype(np.float32)
            hit = (X @ self._incidence) == self._sizes32
            out[lo : lo + block.size] = hit @ self.thetas
        return out

    def clone(self, ledger_mode=None):
        return SOUGame(self.n, self.term_masks, self.thetas, ledger_mode or self.ledger.mode)

    def scaled(self, c: float) -> "SOUGame":
        return SOUGame(self.n, self.term_masks, c * self.thetas, self.ledger.mode)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "terms": [{"members": list(m), "theta": th} for m, th in self.terms],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc: dict) -> "SOUGame":
        n = int(doc["n"])
        masks = [Coalition.from_members(t["members"], n).mask for t in doc["terms"]]
        thetas = [float(t["theta"]) for t in doc["terms"]]
        return cls(n, np.array(masks, dtype=np.uint64), thetas)

    @classmethod
    def from_json(cls, text: str) -> "SOUGame":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_terms(cls, n: int, terms) -> "SOUGame":
        """Build from ``[(members, theta), ...]``."""
        masks = [Coalition.from_members(m, n).mask for m, _ in terms]
        return cls(n, np.array(masks, dtype=np.uint64), [float(t) for _, t in terms])


def sou_generate(n: int, eta: float, sigma2: float = 1.0, seed: int = 0, n_high: int | None = None) -> SOUGame:
    """Random sum-of-unanimity game with a controlled low-order share.

    All singletons and pairs get ``theta ~ N(0, eta * sigma2 / n_low)``;
    ``n_high`` (default ``n**2``) random coalitions of size >= 3 get
    ``theta ~ N(0, (1 - eta) * sigma2 / n_high)``. A high-order coalition is
    drawn by picking a size uniformly in ``[3, n]`` and then a uniform subset
    of that size; repeats are kept.
    """
    n = check_n(n)
    if n < 3:
        raise ValueError("SOU games need n >= 3")
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if not sigma2 >= 0.0:
        raise ValueError(f"sigma2 must be nonnegative, got {sigma2}")
    n_high = n * n if n_high is None else int(n_high)
    rng = np.random.default_rng(seed)

    singles = [1 << i for i in range(n)]
    pairs = [(1 << i) | (1 << j) for i in range(n) for j in range(i + 1, n)]
    low = np.array(singles + pairs, dtype=np.uint64)
    theta_low = rng.normal(0.0, np.sqrt(eta * sigma2 / low.size), size=low.size)

    sizes = rng.integers(3, n + 1, size=n_high)
    high = random_subsets(rng, n, sizes)
    theta_high = rng.normal(0.0, np.sqrt((1.0 - eta) * sigma2 / max(n_high, 1)), size=n_high)

    return SOUGame(n, np.concatenate([low, high]), np.concatenate([theta_low, theta_high]))


def exact_sou_values(game: SOUGame, family: SemivalueFamily) -> np.ndarray:
    """Closed-form semivalues of an SOU game; consumes no queries."""
    if family.n != game.n:
        raise ValueError("family and game disagree on the player count")
    coef = unanimity_size_coefficients(family)[game.term_sizes] * game.thetas
    members = masks_to_bool(game.term_masks, game.n)
    return members.T.astype(float) @ coef


def brute_force_values(oracle, family: SemivalueFamily, n: int | None = None) -> np.ndarray:
    """Semivalues by full enumeration of ``2^n`` coalitions (``n <= 20``).

    ``oracle`` is a :class:`Game` or any callable taking a boolean membership
    vector. Each coalition is evaluated exactly once.
    """
    n = family.n if n is None else int(n)
    if n > 20:
        raise ValueError(f"brute force enumeration is limited to n <= 20, got {n}")
    if n != family.n:
        raise ValueError("family was built for a different player count")
    masks = all_masks(n)
    if isinstance(oracle, Game):
        table = oracle.evaluate_batch(masks)
    else:
        members = masks_to_bool(masks, n)
        table = np.array([float(oracle(row)) for row in members])
    sizes = popcount(masks)
    weights = family.alphas[np.minimum(sizes, n - 1)]
    phi = np.empty(n)
    idx = np.arange(masks.size, dtype=np.int64)
    for i in range(n):
        without = idx[(idx >> i) & 1 == 0]
        phi[i] = np.sum(weights[without] * (table[without | (1 << i)] - table[without]))
    return phi


def coalition_masks(members_list, n: int) -> np.ndarray:
    """Convenience: list of member iterables -> uint64 mask array."""
    return bool_to_masks(np.array([[i in set(m) for i in range(n)] for m in members_list], dtype=bool))
