"""Vectorised helpers for coalitions stored as uint64 bitmasks.

Player ``i`` (0-based) corresponds to bit ``i``. All array helpers accept and
return ``np.uint64`` masks so that ``n <= 64`` players fit in one word.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

MAX_PLAYERS = 64


def check_n(n: int) -> int:
    n = int(n)
    if not 1 <= n <= MAX_PLAYERS:
        raise ValueError(f"player count must be in [1, {MAX_PLAYERS}], got {n}")
    return n


def full_mask(n: int) -> int:
    return (1 << n) - 1


@lru_cache(maxsize=None)
def _bit_values(n: int) -> np.ndarray:
    return np.left_shift(np.uint64(1), np.arange(n, dtype=np.uint64))


def masks_to_bool(masks, n: int) -> np.ndarray:
    """(m,) uint64 masks -> (m, n) boolean membership matrix."""
    masks = np.asarray(masks, dtype=np.uint64).reshape(-1)
    return (masks[:, None] & _bit_values(n)[None, :]) != 0


def bool_to_masks(members: np.ndarray) -> np.ndarray:
    """(m, n) boolean membership matrix -> (m,) uint64 masks."""
    members = np.asarray(members, dtype=bool)
    if members.ndim == 1:
        members = members[None, :]
    n = members.shape[1]
    out = np.zeros(members.shape[0], dtype=np.uint64)
    bits = _bit_values(n)
    for i in range(n):
        out |= np.where(members[:, i], bits[i], np.uint64(0))
    return out


def popcount(masks) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.uint64)
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(masks).astype(np.int64)
    # fallback: SWAR popcount
    x = masks.copy()
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return ((x * np.uint64(0x0101010101010101)) >> np.uint64(56)).astype(np.int64)


def complement(masks, n: int) -> np.ndarray:
    return np.asarray(masks, dtype=np.uint64) ^ np.uint64(full_mask(n))


def all_masks(n: int) -> np.ndarray:
    """Every coalition of ``n`` players, ordered by integer value."""
    if n > 30:
        raise ValueError("refusing to enumerate more than 2^30 coalitions")
    return np.arange(1 << n, dtype=np.uint64)


def random_subsets(rng: np.random.Generator, n: int, sizes, forbid: int | None = None) -> np.ndarray:
    """Uniform random coalitions with prescribed sizes.

    Each row draws i.i.d. uniform keys and keeps the ``s`` smallest, i.e. the
    length-``s`` prefix of a uniformly random permutation. If ``forbid`` is a
    player index, that player is excluded and subsets are drawn from the rest.
    """
    sizes = np.asarray(sizes, dtype=np.int64).reshape(-1)
    m = sizes.shape[0]
    if m == 0:
        return np.zeros(0, dtype=np.uint64)
    keys = rng.random((m, n))
    if forbid is not None:
        keys[:, forbid] = np.inf
    order = np.argsort(keys, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(n)[None, :].repeat(m, axis=0), axis=1)
    members = ranks < sizes[:, None]
    return bool_to_masks(members)


@lru_cache(maxsize=None)
def binom_table(n: int) -> np.ndarray:
    """Row ``n`` of Pascal's triangle as float64 (exact up to 2^53)."""
    return np.array([float(math.comb(n, k)) for k in range(n + 1)])


def comb(n: int, k: int) -> float:
    if k < 0 or k > n or n < 0:
        return 0.0
    return float(math.comb(n, k))
