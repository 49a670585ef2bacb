import numpy as np
import pytest

from probvalue.ease import EstimatorConfig, ease_estimate, pair_ease_estimate, split_budget, symmetrize_moments
from probvalue.families import make_family
from probvalue.game import UtilityOracle, exact_sou_values, sou_generate
from probvalue.sampling import CellPartition, ResidualMoments
from probvalue.surrogate import FeatureBasis, SurrogateModel, tau_vector


@pytest.fixture(scope="module")
def game():
    return sou_generate(6, 0.5, 1.0, seed=11)


def test_split_budget():
    assert split_budget(98, 0.2, 2) == (20, 78)
    assert split_budget(10, 0.25, 2) == (3, 7)
    with pytest.raises(ValueError):
        split_budget(2, 0.2, 2)


@pytest.mark.parametrize(
    "kwargs",
    [{"pilot_fraction": 0.0}, {"pilot_fraction": 1.0}, {"folds": 1}, {"eps": 0.0}, {"eps": 1.5}, {"budget": 0}],
)
def test_config_validation(kwargs):
    base = {"family": make_family("shapley", 5), "budget": 50}
    with pytest.raises(ValueError):
        EstimatorConfig(**(base | kwargs))


def test_budget_accounting(game):
    fam = make_family("shapley", 6)
    rep = ease_estimate(game, EstimatorConfig(fam, 77, seed=1))
    assert rep.queries == 77
    assert rep.config["m_init"] + rep.config["m_est"] == 75
    rep = pair_ease_estimate(game, EstimatorConfig(fam, 77, seed=1))
    assert rep.queries == 2 + 2 * 37


def test_eps_one_gives_base_law(game):
    fam = make_family("beta", 6, 4, 1)
    cfg = EstimatorConfig(fam, 200, eps=1.0, seed=3, require_coverage=False)
    rep = ease_estimate(game, cfg)
    part = CellPartition.by_size(6)
    np.testing.assert_allclose(rep.law["pi"], 1 / (part.K * part.cardinalities), rtol=1e-15)
    assert rep.config["law_fallback"] is False


def test_coverage_fallback_recorded(game):
    fam = make_family("shapley", 6)
    rep = ease_estimate(game, EstimatorConfig(fam, 7, seed=0))
    assert rep.config["law_fallback"] is True


def test_exact_when_surrogate_contains_u():
    n = 6
    basis = FeatureBasis("fo", n)
    h = SurrogateModel(basis, np.random.default_rng(0).normal(size=basis.p))
    bits = 1 << np.arange(n)
    g = UtilityOracle(lambda x: float(h(int(np.dot(x, bits)))), n)
    fam = make_family("banzhaf", n, 0.25)
    rep = ease_estimate(g, EstimatorConfig(fam, 300, seed=2))
    np.testing.assert_allclose(rep.estimates, tau_vector(h, fam), atol=1e-6)


def test_deterministic(game):
    fam = make_family("shapley", 6)
    cfg = EstimatorConfig(fam, 120, basis="sp", seed=5, min_rows=0.5)
    a, b = ease_estimate(game, cfg).to_dict(), ease_estimate(game, cfg).to_dict()
    assert a == b
    c = pair_ease_estimate(game, cfg).to_dict()
    assert c == pair_ease_estimate(game, cfg).to_dict()


@pytest.mark.parametrize("estimator", [ease_estimate, pair_ease_estimate])
def test_unbiased(game, estimator):
    fam = make_family("shapley", 6)
    exact = exact_sou_values(game, fam)
    cfg = EstimatorConfig(fam, 82, seed=None, min_rows=0, reuse_pilot=estimator is ease_estimate)
    draws = np.array([estimator(game, cfg, np.random.default_rng(r)).estimates for r in range(1200)])
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - exact) <= 4 * se)


def test_pair_ease_rejects_banzhaf_quarter(game):
    with pytest.raises(ValueError):
        pair_ease_estimate(game, EstimatorConfig(make_family("banzhaf", 6, 0.25), 50))


def test_symmetrize_moments():
    part = CellPartition.by_size(5)
    M = symmetrize_moments(ResidualMoments([4.0, 1.0, 0.0, 2.0], [2, 1, 0, 2]), part)
    # sizes 1 and 4 pool (8 + 4) / 4; sizes 2 and 3 pool (1 + 0) / 1
    np.testing.assert_allclose(M.Mhat, [3.0, 1.0, 1.0, 3.0])
    np.testing.assert_array_equal(M.Nk, [4, 1, 1, 4])
    with pytest.raises(ValueError):
        symmetrize_moments(ResidualMoments([1.0], [1]), CellPartition.single(5))
