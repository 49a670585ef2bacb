import numpy as np
import pytest

from probvalue._bits import all_masks, full_mask
from probvalue.estimators import (
    EstimateReport,
    aipw_estimate,
    edge_lift_estimate,
    edge_lift_vector,
    endpoint_term,
    fit_surrogate,
    hajek_estimate,
    hajek_from_sample,
    ht_estimate,
    ht_from_sample,
    interior_tau,
    pair_aipw_estimate,
    shapley_wls_spec,
    wls_ridge_estimate,
)
from probvalue.families import TargetSpec, make_family, parse_family, unanimity_values
from probvalue.game import SOUGame, UtilityOracle, exact_sou_values, sou_generate
from probvalue.sampling import CellLaw, CellPartition, named_law, sample, size_law
from probvalue.surrogate import FeatureBasis, SurrogateModel


def within_clt(draws, exact, k=4.0):
    draws = np.asarray(draws)
    se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
    dev = np.abs(draws.mean(axis=0) - exact)
    return np.all(dev <= k * se + 1e-12), dev / np.maximum(se, 1e-300)


@pytest.fixture(scope="module")
def game6():
    return sou_generate(6, 0.5, 1.0, seed=3)


def zero_game(n):
    return UtilityOracle(lambda x: 0.0, n)


def test_ht_zero_utility():
    rep = ht_estimate(zero_game(5), make_family("shapley", 5), None, named_law("uniform", 5), 20, np.random.default_rng(0))
    assert not np.any(rep.estimates)
    assert rep.queries == 22


def test_ht_rejects_zero_support():
    n = 5
    law = size_law(n, [1, 0, 1, 1])
    with pytest.raises(ValueError):
        ht_estimate(zero_game(n), make_family("shapley", n), None, law, 5, np.random.default_rng(0))
    ends = CellLaw.from_weights(CellPartition.by_size(n, includes_endpoints=True), np.ones(n + 1))
    with pytest.raises(ValueError):
        ht_estimate(zero_game(n), make_family("shapley", n), None, ends, 5, np.random.default_rng(0))


def test_endpoint_term_unanimity_of_all():
    n = 4
    g = SOUGame.from_terms(n, [((0, 1, 2, 3), 1.0)])
    fam = make_family("banzhaf", n, 0.25)
    np.testing.assert_allclose(endpoint_term(g, fam, TargetSpec.identity(n)), unanimity_values(fam, n, range(n)))


@pytest.mark.parametrize("name", ["shapley", "beta:4,1", "banzhaf:0.25"])
def test_hajek_single_cell_equals_ht(game6, name):
    fam = parse_family(name, 6)
    law = named_law("ofa", 6)
    masks = sample(law, np.random.default_rng(1), 200)
    y = game6.evaluate_batch(masks)
    T = TargetSpec.identity(6)
    np.testing.assert_array_equal(hajek_from_sample(fam, T, law, "single", masks, y), ht_from_sample(fam, T, law, masks, y))


def test_hajek_uses_only_occupied_cell():
    n = 4
    fam = make_family("shapley", n)
    law = named_law("uniform", n)
    part = CellPartition.by_size(n)
    masks = np.array([0b0011, 0b0101, 0b1100], dtype=np.uint64)
    y = np.array([1.0, 2.0, 4.0])
    T = TargetSpec.group(n, range(n))
    Q2 = law.size_distribution()[2]
    expected = Q2 * ht_from_sample(fam, T, law, masks, y)
    np.testing.assert_allclose(hajek_from_sample(fam, T, law, part, masks, y), expected, rtol=1e-14)


def test_hajek_constant_cells_have_no_variance():
    # u(S) = 1 / |rho(S)| style: with u depending on size only, gamma*u is constant per
    # (size, membership) cell, so membership Hajek is exact on any sample hitting every cell
    n = 5
    g = UtilityOracle(lambda x: float(np.sum(x)) ** 2, n)
    fam = make_family("shapley", n)
    from probvalue.game import brute_force_values
    exact = brute_force_values(g, fam)
    law = named_law("ofa", n)
    outs = [hajek_estimate(g, fam, None, law, "membership", 400, np.random.default_rng(r)).estimates for r in range(5)]
    for est in outs:
        np.testing.assert_allclose(est, exact, atol=1e-12)


def test_hajek_membership_unbiased_large_m(game6):
    fam = make_family("shapley", 6)
    exact = exact_sou_values(game6, fam)
    law = named_law("ofa", 6)
    est = hajek_estimate(game6, fam, None, law, "membership", 40_000, np.random.default_rng(2)).estimates
    np.testing.assert_allclose(est, exact, atol=0.05 * np.abs(exact).max())


def test_wls_interpolation():
    n = 6
    phi = np.array([1.0, -2.0, 0.5, 0.0, 3.0, 1.5])
    phi -= phi.mean()  # u = phi @ x then lies in the span of the centred inclusion features
    g = UtilityOracle(lambda x: float(phi @ x), n)
    rep = wls_ridge_estimate(g, shapley_wls_spec(n), named_law("kernelshap", n), 60, 1e-10, np.random.default_rng(0))
    np.testing.assert_allclose(rep.estimates, phi, atol=1e-6)
    assert rep.queries == 62


def test_wls_huge_ridge_is_endpoint_share():
    n = 5
    g = sou_generate(n, 0.5, 1.0, seed=1)
    rep = wls_ridge_estimate(g, shapley_wls_spec(n), named_law("uniform", n), 40, 1e12, np.random.default_rng(0))
    share = (g.evaluate_batch([full_mask(n)], record=False)[0] - g.evaluate_batch([0], record=False)[0]) / n
    np.testing.assert_allclose(rep.estimates, share, atol=1e-8)


def test_wls_leverage_constant_under_leverage_law():
    n = 7
    spec = shapley_wls_spec(n)
    masks = all_masks(n)[1:-1]
    lev = spec.leverage(masks, named_law("leverageshap", n))
    np.testing.assert_allclose(lev, n - 1, rtol=1e-12)


def test_aipw_exact_when_surrogate_contains_u():
    n = 6
    rng = np.random.default_rng(3)
    beta = rng.normal(size=n + 3)
    basis = FeatureBasis("fo", n)
    h = SurrogateModel(basis, beta)
    g = UtilityOracle(lambda x: float(h(int(np.dot(x, 1 << np.arange(n))))), n)
    fam = make_family("beta", n, 4, 1)
    from probvalue.surrogate import tau_vector
    target = tau_vector(h, fam)
    rep = aipw_estimate(g, fam, None, named_law("uniform", n), basis, 30, rng=rng, surrogate=h)
    np.testing.assert_allclose(rep.estimates, target, atol=1e-10)
    cf = aipw_estimate(g, fam, None, named_law("uniform", n), basis, 400, folds=3, rng=rng, min_rows=0)
    np.testing.assert_allclose(cf.estimates, target, atol=1e-6)
    assert len(cf.fold_estimates) == 3


def test_interior_tau_removes_endpoints():
    n = 5
    basis = FeatureBasis("fo", n)
    fam = make_family("shapley", n)
    beta = np.zeros(basis.p)
    beta[0] = 4.0  # constant: no value, no endpoint share
    np.testing.assert_allclose(interior_tau(SurrogateModel(basis, beta), fam, TargetSpec.identity(n)), 0, atol=1e-15)
    beta[:] = 0
    beta[-1] = 1.0  # (|S|/n)^2: value 1/n each, endpoint share alpha_{n-1} * 1
    tau = interior_tau(SurrogateModel(basis, beta), fam, TargetSpec.identity(n))
    np.testing.assert_allclose(tau, 1 / n - fam.alphas[n - 1], atol=1e-14)


@pytest.mark.parametrize("folds", [2, 4])
def test_aipw_cross_fit_unbiased(game6, folds):
    fam = make_family("shapley", 6)
    exact = exact_sou_values(game6, fam)
    law = named_law("uniform", 6)
    draws = [
        aipw_estimate(game6, fam, None, law, "fo", 40, folds, np.random.default_rng(r), min_rows=0).estimates
        for r in range(1500)
    ]
    ok, z = within_clt(draws, exact)
    assert ok, z


def test_aipw_errors(game6):
    fam = make_family("shapley", 6)
    with pytest.raises(ValueError):
        aipw_estimate(game6, fam, None, named_law("uniform", 6), "fo", 1, 2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        aipw_estimate(game6, fam, None, named_law("uniform", 6), "fo", 10, 2, np.random.default_rng(0), loss="l1")


def test_aipw_unweighted_and_per_target_budget(game6):
    fam = make_family("banzhaf", 6, 0.25)
    rep = aipw_estimate(game6, fam, None, named_law("uniform", 6), "fo", 50, 2, np.random.default_rng(0), loss="unweighted")
    assert rep.queries == 52
    rep = aipw_estimate(game6, fam, None, named_law("uniform", 6), "poly2", 80, 2, np.random.default_rng(0), shared=False)
    assert rep.estimates.shape == (6,)


def test_pair_rejects_asymmetric_family(game6):
    with pytest.raises(ValueError):
        pair_aipw_estimate(game6, make_family("banzhaf", 6, 0.25), None, named_law("uniform", 6), "fo", 10, rng=np.random.default_rng(0))


def test_pair_exact_with_true_surrogate_and_budget():
    n = 6
    basis = FeatureBasis("poly2", n)
    rng = np.random.default_rng(4)
    h = SurrogateModel(basis, rng.normal(size=basis.p))
    bits = 1 << np.arange(n)
    g = UtilityOracle(lambda x: float(h(int(np.dot(x, bits)))), n)
    fam = make_family("banzhaf", n, 0.5)
    from probvalue.surrogate import tau_vector
    rep = pair_aipw_estimate(g, fam, None, named_law("ofa", n), basis, 15, rng=rng, surrogate=h)
    np.testing.assert_allclose(rep.estimates, tau_vector(h, fam), atol=1e-10)
    assert rep.queries == 32


def test_pair_unbiased(game6):
    fam = make_family("shapley", 6)
    exact = exact_sou_values(game6, fam)
    law = size_law(6, [4, 1, 1, 1, 2])
    draws = [pair_aipw_estimate(game6, fam, None, law, "fo", 20, rng=np.random.default_rng(r), min_rows=0).estimates for r in range(1500)]
    ok, z = within_clt(draws, exact)
    assert ok, z


def test_edge_lift_constant_and_singleton():
    n = 6
    fam = make_family("beta", n, 4, 1)
    assert edge_lift_estimate(UtilityOracle(lambda x: 3.0, n), fam, 2, 50, np.random.default_rng(0)) == 0.0
    g = SOUGame.from_terms(n, [((2,), 1.0)])
    assert edge_lift_estimate(g, fam, 2, 37, np.random.default_rng(0)) == pytest.approx(1.0, abs=1e-12)


def test_edge_lift_unbiased_and_support():
    n = 6
    g = sou_generate(n, 0.5, 1.0, seed=5)
    fam = make_family("banzhaf", n, 0.25)
    exact = exact_sou_values(g, fam)
    probs = np.array([0.3, 0.1, 0.1, 0.1, 0.1, 0.3])
    draws = [edge_lift_estimate(g, fam, 1, 16, np.random.default_rng(r), probs) for r in range(3000)]
    ok, z = within_clt(np.array(draws)[:, None], exact[1:2])
    assert ok, z
    with pytest.raises(ValueError):
        edge_lift_estimate(g, fam, 1, 4, np.random.default_rng(0), [0.5, 0, 0, 0, 0, 0.5])


def test_edge_lift_vector_budget():
    n = 5
    g = sou_generate(n, 0.5, 1.0, seed=2)
    rep = edge_lift_vector(g, make_family("shapley", n), None, 13, np.random.default_rng(0))
    assert rep.queries == 26
    assert isinstance(rep, EstimateReport) and rep.to_dict()["queries"] == 26


@pytest.mark.parametrize("rows, tier", [(16, "full"), (15, "size"), (6, "size"), (5, "zero")])
def test_fit_surrogate_picks_finest_supported_tier(rows, tier):
    # fo at n = 5: p = 8 coefficients, the size tier has 3
    b = FeatureBasis("fo", 5)
    rng = np.random.default_rng(rows)
    masks = rng.integers(1, 31, rows).astype(np.uint64)
    X, y = b.matrix(masks), rng.normal(size=rows)
    beta = fit_surrogate(np.ones((rows, 1)), X, y, b).beta.ravel()
    players = beta[1:6]
    if tier == "zero":
        assert not beta.any()
    elif tier == "size":
        assert not players.any() and beta.any()
    else:
        assert np.ptp(players) > 0
