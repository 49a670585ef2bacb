import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle import alphas_for, beta_alphas, semivalue
from probvalue._bits import all_masks, complement
from probvalue.families import (
    SemivalueFamily,
    TargetSpec,
    make_family,
    parse_family,
    rho,
    rho_matrix,
    rho_vector,
    unanimity_values,
)
from probvalue.game import brute_force_values

FAMILIES = ["shapley", "beta:4,1", "beta:1,4", "banzhaf:0.25", "banzhaf:0.5", "banzhaf:0.75"]


def test_shapley_n3_weights():
    np.testing.assert_allclose(make_family("shapley", 3).alphas, [1 / 3, 1 / 6, 1 / 3], atol=1e-15)


def test_banzhaf_half_is_flat():
    np.testing.assert_allclose(make_family("banzhaf", 5, 0.5).alphas, np.full(5, 1 / 16), atol=1e-15)


@pytest.mark.parametrize("n", range(1, 13))
def test_beta_11_is_shapley(n):
    np.testing.assert_allclose(make_family("beta", n, 1, 1).alphas, make_family("shapley", n).alphas, atol=1e-12)


@pytest.mark.parametrize("name", FAMILIES)
@pytest.mark.parametrize("n", [2, 5, 17, 40, 64])
def test_weights_match_reference(name, n):
    fam = parse_family(name, n)
    np.testing.assert_allclose(fam.alphas, alphas_for(name, n), rtol=1e-9, atol=1e-300)


def test_beta_41_favours_small_coalitions():
    a = make_family("beta", 10, 4, 1).alphas
    mass = np.array([math.comb(9, s) for s in range(10)]) * a
    assert mass[0] > mass[-1]
    np.testing.assert_allclose(a, beta_alphas(10, 4, 1), rtol=1e-12)


@pytest.mark.parametrize(
    "bad",
    [("beta", 5, 0, 1), ("beta", 5, 1, -2), ("banzhaf", 5, 0.0), ("banzhaf", 5, 1.0), ("nope", 5), ("shapley", 0)],
)
def test_invalid_parameters(bad):
    with pytest.raises(ValueError):
        make_family(*bad)


def test_unnormalised_family_rejected():
    with pytest.raises(ValueError):
        SemivalueFamily("custom", 3, np.array([0.5, 0.5, 0.5]))


def test_rho_examples():
    fam = make_family("shapley", 3)
    # players are 0-based: player 0, S = {1} and S = {0}
    assert rho(fam, 0, [1]) == pytest.approx(-1 / 6)
    assert rho(fam, 0, [0]) == pytest.approx(1 / 3)


@pytest.mark.parametrize("name", ["shapley", "beta:4,1", "banzhaf:0.25"])
def test_weighted_sum_identity(name):
    n = 7
    rng = np.random.default_rng(3)
    table = rng.normal(size=1 << n)
    fam = parse_family(name, n)
    masks = all_masks(n)
    phi = rho_matrix(fam, masks).T @ table[masks.astype(np.int64)]
    expected = semivalue(lambda m: table[m], n, alphas_for(name, n))
    np.testing.assert_allclose(phi, expected, atol=1e-12)


def test_rho_vector_targets():
    n = 6
    fam = make_family("shapley", n)
    masks = all_masks(n)
    group = TargetSpec.group(n, [0, 2, 3])
    R = rho_matrix(fam, masks)
    np.testing.assert_allclose(rho_vector(fam, group, masks)[:, 0], R[:, [0, 2, 3]].sum(axis=1), atol=1e-15)
    ones = TargetSpec(np.ones((n, 1)))
    s = np.array([bin(int(m)).count("1") for m in masks])
    a = fam.alphas
    expected = np.where(s > 0, s * a[np.maximum(s - 1, 0)], 0.0) - np.where(s < n, (n - s) * a[np.minimum(s, n - 1)], 0.0)
    np.testing.assert_allclose(rho_vector(fam, ones, masks)[:, 0], expected, atol=1e-15)


@pytest.mark.parametrize("name,sym", [("shapley", True), ("beta:2,2", True), ("banzhaf:0.5", True), ("banzhaf:0.25", False), ("beta:4,1", False)])
def test_sign_symmetry(name, sym):
    n = 8
    fam = parse_family(name, n)
    masks = all_masks(n)
    R, Rc = rho_matrix(fam, masks), rho_matrix(fam, complement(masks, n))
    assert fam.is_sign_symmetric == sym
    assert np.allclose(Rc, -R, atol=1e-15) == sym


@pytest.mark.parametrize("n", [4, 5])
def test_unanimity_pair_shapley(n):
    phi = unanimity_values(make_family("shapley", n), n, [0, 1])
    np.testing.assert_allclose(phi, [0.5, 0.5] + [0.0] * (n - 2), atol=1e-15)


@pytest.mark.parametrize("p", [0.25, 0.5])
@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_unanimity_banzhaf(p, k):
    n = 6
    fam = make_family("banzhaf", n, p)
    T = list(range(k))
    phi = unanimity_values(fam, n, T)
    brute = semivalue(lambda m: float(m & ((1 << k) - 1) == (1 << k) - 1), n, alphas_for(f"banzhaf:{p}", n))
    np.testing.assert_allclose(phi, brute, atol=1e-12)
    np.testing.assert_allclose(phi[:k], p ** (k - 1), atol=1e-12)


def test_unanimity_rejects_empty():
    with pytest.raises(ValueError):
        unanimity_values(make_family("shapley", 4), 4, [])


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 64),
    which=st.sampled_from(["shapley", "beta", "banzhaf"]),
    a=st.floats(0.2, 16),
    b=st.floats(0.2, 16),
    p=st.floats(0.01, 0.99),
)
def test_normalisation_property(n, which, a, b, p):
    fam = {"shapley": lambda: make_family("shapley", n), "beta": lambda: make_family("beta", n, a, b),
           "banzhaf": lambda: make_family("banzhaf", n, p)}[which]()
    total = sum(math.comb(n - 1, s) * float(x) for s, x in enumerate(fam.alphas))
    assert abs(total - 1) < 1e-12
    assert np.all(fam.alphas >= 0)


@settings(max_examples=25, deadline=None)
@given(members=st.sets(st.integers(0, 6), min_size=1), name=st.sampled_from(FAMILIES))
def test_unanimity_matches_brute_force(members, name):
    n = 7
    fam = parse_family(name, n)
    T = sorted(members)
    brute = brute_force_values(lambda x: float(x[T].all()), fam)
    np.testing.assert_allclose(unanimity_values(fam, n, T), brute, atol=1e-12)
