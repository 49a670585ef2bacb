"""Cell-constant sampling laws on the coalition lattice.

A :class:`CellPartition` splits a range of coalitions into cells, each cell
being a union of *atoms*: all coalitions of a given size, optionally split by
whether a distinguished player belongs to them. A :class:`CellLaw` assigns the
same probability ``pi[k]`` to every coalition of cell ``k``.

By default the empty and grand coalitions are excluded; estimators add their
contribution deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from probvalue._bits import binom_table, check_n, complement, popcount, random_subsets
from probvalue.families import SemivalueFamily, TargetSpec

__all__ = [
    "CellPartition",
    "CellLaw",
    "ResidualMoments",
    "named_law",
    "size_law",
    "init_law",
    "init_moments",
    "residual_law",
    "residual_moments",
    "sample",
    "prob",
    "pair_mass",
    "floor_ok",
    "NAMED_LAWS",
]

ANY, IN, OUT = -1, 1, 0


@dataclass(frozen=True)
class CellPartition:
    """Partition of coalitions into cells of atoms ``(size, membership)``.

    ``mode`` is ``"by-size"``, ``"by-size-and-membership"`` (cells split on
    whether ``player`` is in the coalition) or ``"single"`` (one cell).
    """

    n: int
    mode: str
    cells: tuple = field(repr=False)
    player: int | None = None
    includes_endpoints: bool = False

    @classmethod
    def by_size(cls, n: int, includes_endpoints: bool = False) -> "CellPartition":
        sizes = _size_range(n, includes_endpoints)
        return cls(n, "by-size", tuple(((s, ANY),) for s in sizes), None, includes_endpoints)

    @classmethod
    def by_size_and_membership(cls, n: int, player: int, includes_endpoints: bool = False) -> "CellPartition":
        if not 0 <= player < n:
            raise ValueError("player outside [0, n)")
        cells = []
        for s in _size_range(n, includes_endpoints):
            if s >= 1:
                cells.append(((s, IN),))
            if s <= n - 1:
                cells.append(((s, OUT),))
        return cls(n, "by-size-and-membership", tuple(cells), player, includes_endpoints)

    @classmethod
    def single(cls, n: int, includes_endpoints: bool = False) -> "CellPartition":
        sizes = _size_range(n, includes_endpoints)
        return cls(n, "single", (tuple((s, ANY) for s in sizes),), None, includes_endpoints)

    @property
    def K(self) -> int:
        return len(self.cells)

    @property
    def cardinalities(self) -> np.ndarray:
        return np.array([sum(_atom_card(self.n, a) for a in cell) for cell in self.cells], dtype=float)

    @property
    def descriptors(self) -> list:
        return [tuple(cell) for cell in self.cells]

    def _lookup(self) -> np.ndarray:
        # table[size, member_bit] -> cell index (-1 outside the range)
        table = np.full((self.n + 1, 2), -1, dtype=np.int64)
        for k, cell in enumerate(self.cells):
            for s, state in cell:
                if state == ANY:
                    table[s, :] = k
                else:
                    table[s, state] = k
        return table

    def cell_index(self, masks) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.uint64).reshape(-1)
        sizes = popcount(masks)
        if self.player is None:
            bit = np.zeros(masks.size, dtype=np.int64)
        else:
            bit = ((masks >> np.uint64(self.player)) & np.uint64(1)).astype(np.int64)
        return self._lookup()[sizes, bit]


def _size_range(n: int, includes_endpoints: bool) -> range:
    check_n(n)
    if includes_endpoints:
        return range(0, n + 1)
    if n < 2:
        raise ValueError("interior coalitions need n >= 2")
    return range(1, n)


def _atom_card(n: int, atom) -> float:
    s, state = atom
    if state == ANY:
        return binom_table(n)[s]
    if state == IN:
        return binom_table(n - 1)[s - 1] if s >= 1 else 0.0
    return binom_table(n - 1)[s] if s <= n - 1 else 0.0


@dataclass(frozen=True)
class CellLaw:
    """Per-coalition probabilities ``pi[k]`` on the cells of ``partition``."""

    partition: CellPartition
    pi: np.ndarray = field(repr=False)
    name: str = "custom"

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float).reshape(-1)
        if pi.shape != (self.partition.K,):
            raise ValueError("need one probability per cell")
        if np.any(pi < 0) or not np.all(np.isfinite(pi)):
            raise ValueError("cell probabilities must be finite and nonnegative")
        total = float(np.dot(self.partition.cardinalities, pi))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"law does not sum to one (total = {total!r})")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def includes_endpoints(self) -> bool:
        return self.partition.includes_endpoints

    @property
    def cell_mass(self) -> np.ndarray:
        return self.partition.cardinalities * self.pi

    def size_distribution(self) -> np.ndarray:
        """Probability that the drawn coalition has size ``s``, ``s = 0..n``."""
        out = np.zeros(self.n + 1)
        for k, cell in enumerate(self.partition.cells):
            for atom in cell:
                out[atom[0]] += _atom_card(self.n, atom) * self.pi[k]
        return out

    def snapshot(self) -> dict:
        return {"name": self.name, "mode": self.partition.mode, "pi": self.pi.tolist()}

    @classmethod
    def from_weights(cls, partition: CellPartition, weights, name: str = "custom") -> "CellLaw":
        """Normalise nonnegative per-coalition weights into a law."""
        w = np.asarray(weights, dtype=float)
        total = float(np.dot(partition.cardinalities, w))
        if not total > 0:
            raise ValueError("weights have zero total mass")
        pi = w / total
        # second pass absorbs the rounding of the first division
        pi = pi / float(np.dot(partition.cardinalities, pi))
        return cls(partition, pi, name)


@dataclass(frozen=True)
class ResidualMoments:
    """Per-cell pilot averages of squared weighted residuals."""

    Mhat: np.ndarray
    Nk: np.ndarray

    def __post_init__(self):
        Mhat = np.asarray(self.Mhat, dtype=float)
        Nk = np.asarray(self.Nk, dtype=np.int64)
        if Mhat.shape != Nk.shape:
            raise ValueError("Mhat and Nk must align")
        if np.any(Mhat < 0):
            raise ValueError("residual moments must be nonnegative")
        if np.any(Mhat[Nk == 0] != 0):
            raise ValueError("empty cells must carry zero moment")
        object.__setattr__(self, "Mhat", Mhat)
        object.__setattr__(self, "Nk", Nk)


def residual_moments(partition: CellPartition, masks, sq_residuals) -> ResidualMoments:
    """Average ``sq_residuals`` per cell, dividing by ``max(N_k, 1)``."""
    k = partition.cell_index(masks)
    if np.any(k < 0):
        raise ValueError("pilot coalition outside the partition")
    Nk = np.bincount(k, minlength=partition.K)
    sums = np.bincount(k, weights=np.asarray(sq_residuals, dtype=float), minlength=partition.K)
    return ResidualMoments(sums / np.maximum(Nk, 1), Nk)


def size_law(n: int, size_weights, name: str = "custom") -> CellLaw:
    """By-size law over interior sizes from unnormalised weights on sizes 1..n-1."""
    part = CellPartition.by_size(n)
    w = np.asarray(size_weights, dtype=float)
    if w.shape != (n - 1,):
        raise ValueError("need one weight per interior size")
    q = w / w.sum()
    return CellLaw.from_weights(part, q / binom_table(n)[1:n], name)


def _named_size_weights(kind: str, n: int) -> np.ndarray:
    s = np.arange(1, n, dtype=float)
    if kind in ("uniform", "uniform-size", "leverageshap"):
        return np.ones(n - 1)
    if kind == "ofa":
        return 1.0 / np.sqrt(s * (n - s))
    if kind == "svarm":
        return 1.0 / np.minimum(s, n - s)
    if kind == "kernelshap":
        # Shapley kernel (n-1)/(C(n,s) s (n-s)) times the C(n,s) coalitions of size s
        return (n - 1) / (s * (n - s))
    raise ValueError(f"unknown sampling law {kind!r}")


NAMED_LAWS = ("uniform", "uniform-size", "ofa", "svarm", "kernelshap", "leverageshap")


def named_law(kind: str, n: int) -> CellLaw:
    """Baseline size-stratified law over interior coalitions."""
    if n < 2:
        raise ValueError("named laws need n >= 2")
    return size_law(n, _named_size_weights(kind, n), name=kind)


def _atom_moments(n: int, atom, player: int | None):
    """Mean vector and second-moment matrix of the membership vector on an atom."""
    s, state = atom
    if state == ANY:
        mean = np.full(n, s / n)
        off = s * (s - 1) / (n * (n - 1)) if n > 1 else 0.0
        second = np.full((n, n), off)
        np.fill_diagonal(second, s / n)
        return mean, second
    others = np.array([j for j in range(n) if j != player])
    r = s - 1 if state == IN else s
    m = n - 1
    mean = np.zeros(n)
    second = np.zeros((n, n))
    p1 = r / m if m else 0.0
    p2 = r * (r - 1) / (m * (m - 1)) if m > 1 else 0.0
    mean[others] = p1
    second[np.ix_(others, others)] = p2
    second[others, others] = p1
    if state == IN:
        mean[player] = 1.0
        second[player, player] = 1.0
        second[player, others] = p1
        second[others, player] = p1
    return mean, second


def init_law(partition: CellPartition, family: SemivalueFamily, targets: TargetSpec | None = None) -> CellLaw:
    """Pilot law with ``pi_k`` proportional to ``sqrt(mean_{S in C_k} |rho_A(S)|^2)``.

    The cell averages are computed in closed form from the first two moments
    of the membership vector on each atom, so no enumeration is needed.
    """
    n = partition.n
    if family.n != n:
        raise ValueError("family and partition disagree on n")
    targets = TargetSpec.identity(n) if targets is None else targets
    M = init_moments(partition, family, targets)
    return CellLaw.from_weights(partition, np.sqrt(M), name="ease-init")


def init_moments(partition: CellPartition, family: SemivalueFamily, targets: TargetSpec) -> np.ndarray:
    n = partition.n
    a = np.concatenate([[0.0], family.alphas, [0.0]])  # a[s + 1] = alpha_s, alpha_{-1} = alpha_n = 0
    P = targets.A @ targets.A.T
    ones = np.ones(n)
    P1 = float(ones @ P @ ones)
    Prow = P @ ones
    M = np.zeros(partition.K)
    cards = partition.cardinalities
    for k, cell in enumerate(partition.cells):
        total = 0.0
        for atom in cell:
            card = _atom_card(n, atom)
            if card == 0:
                continue
            s = atom[0]
            b = -a[s + 1]  # coefficient for players outside S
            c = a[s]  # coefficient for players inside S
            mean, second = _atom_moments(n, atom, partition.player)
            val = b * b * P1 + 2 * b * (c - b) * float(Prow @ mean) + (c - b) ** 2 * float(np.sum(P * second))
            total += card * val
        M[k] = max(total / cards[k], 0.0)
    return M


def floor_ok(law: CellLaw, eps: float) -> bool:
    """Exact check of ``q(S) * K * |C_k| >= eps`` on every cell."""
    K = law.partition.K
    return bool(np.all(law.pi * K * law.partition.cardinalities >= eps))


def residual_law(partition: CellPartition, moments: ResidualMoments, eps: float, fallback: CellLaw) -> CellLaw:
    """Neyman-type law ``pi_k ~ sqrt(Mhat_k)`` mixed with a per-cell uniform floor.

    The result is ``(1 - eps) * q_tilde + eps * q_base`` where
    ``q_base(S) = 1 / (K |C_k|)``. When every ``Mhat_k`` is zero, ``q_tilde``
    is ``fallback``. Every coalition in cell ``k`` ends up with probability at
    least ``eps / (K |C_k|)``.
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"floor eps must lie in (0, 1], got {eps}")
    if fallback.partition != partition:
        raise ValueError("fallback law must live on the same partition")
    cards = partition.cardinalities
    K = partition.K
    root = np.sqrt(moments.Mhat)
    denom = float(np.dot(cards, root))
    tilde = root / denom if denom > 0 else np.asarray(fallback.pi)
    base = 1.0 / (K * cards)
    pi = (1.0 - eps) * tilde + eps * base
    pi = pi / float(np.dot(cards, pi))
    # nudge by ulps so the floor holds under floating-point evaluation too
    for k in range(K):
        while pi[k] * K * cards[k] < eps:
            pi[k] = np.nextafter(pi[k], np.inf)
    return CellLaw(partition, pi, name="ease-residual")


def _atoms_flat(law: CellLaw):
    atoms, probs = [], []
    n = law.n
    for k, cell in enumerate(law.partition.cells):
        for atom in cell:
            card = _atom_card(n, atom)
            if card > 0:
                atoms.append(atom)
                probs.append(card * law.pi[k])
    return atoms, np.array(probs)


def sample(law: CellLaw, rng: np.random.Generator, m: int | None = None):
    """Draw coalitions i.i.d. from ``law``.

    With ``m=None`` one mask (python int) is returned, otherwise a ``(m,)``
    uint64 array. A draw picks an atom with probability ``|atom| * pi`` and
    then a uniform coalition inside it.
    """
    single = m is None
    m = 1 if single else int(m)
    atoms, probs = _atoms_flat(law)
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    which = np.minimum(np.searchsorted(cdf, rng.random(m), side="right"), len(atoms) - 1)
    out = np.zeros(m, dtype=np.uint64)
    n = law.n
    player = law.partition.player
    for a_idx in np.unique(which):
        rows = np.flatnonzero(which == a_idx)
        s, state = atoms[a_idx]
        if state == ANY:
            out[rows] = random_subsets(rng, n, np.full(rows.size, s))
        elif state == IN:
            sub = random_subsets(rng, n, np.full(rows.size, s - 1), forbid=player)
            out[rows] = sub | np.uint64(1 << player)
        else:
            out[rows] = random_subsets(rng, n, np.full(rows.size, s), forbid=player)
    return int(out[0]) if single else out


def prob(law: CellLaw, masks):
    """Per-coalition probability; zero outside the law's support."""
    scalar = np.isscalar(masks) or isinstance(masks, int)
    k = law.partition.cell_index(np.atleast_1d(np.asarray(masks, dtype=np.uint64)))
    out = np.where(k >= 0, law.pi[np.maximum(k, 0)], 0.0)
    return float(out[0]) if scalar else out


def pair_mass(law: CellLaw, masks):
    """``q(S) + q(S^c)``; symmetric under complementation."""
    scalar = np.isscalar(masks) or isinstance(masks, int)
    arr = np.atleast_1d(np.asarray(masks, dtype=np.uint64))
    out = prob(law, arr) + prob(law, complement(arr, law.n))
    return float(out[0]) if scalar else out
