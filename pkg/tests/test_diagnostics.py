import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle import sou_utility
from probvalue.diagnostics import (
    ConvergenceCurve,
    aucc,
    first_order_variance,
    hajek_first_order_variance,
    mse_study,
    relative_sq_error,
    replication_rng,
)
from probvalue.estimators import aipw_estimate
from probvalue.families import TargetSpec, make_family, rho_vector
from probvalue.game import SOUGame, UtilityOracle, exact_sou_values, sou_generate
from probvalue.sampling import named_law, prob, size_law
from probvalue.surrogate import FeatureBasis, SurrogateModel

TERMS = [((0,), 0.7), ((1, 2), -1.2), ((0, 2), 0.4), ((0, 1, 2), 2.0)]


def test_variance_zero_when_surrogate_is_u():
    g = sou_generate(5, 0.5, 1.0, seed=0)
    fam = make_family("shapley", 5)
    v = first_order_variance(g, fam, None, named_law("uniform", 5), surrogate=lambda m: g.evaluate_batch(m, record=False))
    assert v == pytest.approx(0.0, abs=1e-20)
    assert g.ledger.count == 0


def test_variance_double_enumeration():
    n = 3
    u = sou_utility(TERMS)
    g = SOUGame.from_terms(n, TERMS)
    fam = make_family("shapley", n)
    law = named_law("uniform", n)
    order = np.random.default_rng(0).permutation(np.arange(1, 7))
    # second pass in shuffled order, plain python sums
    q = {int(S): float(prob(law, np.array([S], dtype=np.uint64))[0]) for S in order}
    rows = {int(S): rho_vector(fam, TargetSpec.identity(n), np.array([S], dtype=np.uint64))[0] for S in order}
    total = 0.0
    for j in range(n):
        scores = {S: rows[S][j] / q[S] * u(S) for S in q}
        mean = sum(q[S] * scores[S] for S in q)
        total += sum(q[S] * (scores[S] - mean) ** 2 for S in q)
    assert first_order_variance(g, fam, None, law) == pytest.approx(total, rel=1e-12)


def test_variance_homogeneity():
    g = sou_generate(6, 0.5, 1.0, seed=1)
    fam = make_family("banzhaf", 6, 0.25)
    law = named_law("ofa", 6)
    v = first_order_variance(g, fam, None, law)
    assert first_order_variance(g.scaled(3.0), fam, None, law) == pytest.approx(9 * v, rel=1e-12)
    h = SurrogateModel(FeatureBasis("fo", 6), np.random.default_rng(0).normal(size=9))
    scaled_h = SurrogateModel(h.basis, 3.0 * h.beta)
    assert first_order_variance(g.scaled(3.0), fam, None, law, scaled_h) == pytest.approx(
        9 * first_order_variance(g, fam, None, law, h), rel=1e-12
    )


def test_enumeration_cap():
    with pytest.raises(ValueError):
        first_order_variance(lambda x: 0.0, make_family("shapley", 15), None, named_law("uniform", 15))


def test_hajek_variance_vanishes_for_size_only_game():
    n = 6
    g = UtilityOracle(lambda x: float(np.sum(x)) ** 3, n)
    assert hajek_first_order_variance(g, make_family("shapley", n), None, named_law("ofa", n)) == pytest.approx(0, abs=1e-18)


def test_relative_sq_error_examples():
    x = np.array([1.0, -2.0, 3.0])
    assert relative_sq_error(x, x) == 0
    assert relative_sq_error(np.zeros(3), x) == 1
    assert relative_sq_error(2 * x, x) == 1
    with pytest.raises(ValueError):
        relative_sq_error(x, np.zeros(3))


def test_aucc_examples():
    assert aucc(ConvergenceCurve((50, 100), (0.2, 0.1))) == pytest.approx(0.15)
    assert aucc(ConvergenceCurve((1, 2, 3), (0.4, 0.4, 0.4))) == pytest.approx(0.4)
    assert aucc(ConvergenceCurve((10,), (0.7,))) == 0.7
    with pytest.raises(ValueError):
        ConvergenceCurve((100, 50), (0.1, 0.2))
    with pytest.raises(ValueError):
        ConvergenceCurve((1, 2), (0.1,))


def test_mse_study_single_replication():
    out = mse_study(lambda rng: np.array([1.5, 2.0]), [1.0, 1.0], 1)
    np.testing.assert_array_equal(out.bias, [0.5, 1.0])
    assert np.all(np.isnan(out.variance))


def test_mse_study_deterministic():
    est = lambda rng: rng.normal(size=3)  # noqa: E731
    a = mse_study(est, np.zeros(3), 50, master_seed=4)
    b = mse_study(est, np.zeros(3), 50, master_seed=4)
    np.testing.assert_array_equal(a.mse, b.mse)
    assert replication_rng(4, 0).random() == replication_rng(4, 0).random()
    assert replication_rng(4, 0).random() != replication_rng(4, 1).random()


def test_fixed_aipw_mse_halves_with_budget():
    n = 8
    g = sou_generate(n, 0.5, 1.0, seed=2)
    fam = make_family("shapley", n)
    law = named_law("uniform", n)
    exact = exact_sou_values(g, fam)
    h = SurrogateModel(FeatureBasis("fo", n), np.r_[0.0, exact, 0.0, 0.0])

    def study(m):
        return mse_study(lambda rng: aipw_estimate(g, fam, None, law, "fo", m, rng=rng, surrogate=h), exact, 3000, 1)

    ratio = study(16).total_mse / study(32).total_mse
    assert 2 / 1.15 <= ratio <= 2 * 1.15


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), c=st.floats(-10, 10))
def test_variance_shift_invariance_property(seed, c):
    n = 5
    g = sou_generate(n, 0.5, 1.0, seed=seed)
    fam = make_family("beta", n, 4, 1)
    law = size_law(n, [1, 2, 3, 4])
    u = lambda m: g.evaluate_batch(m, record=False)  # noqa: E731
    bits = 1 << np.arange(n)
    shifted = UtilityOracle(lambda x: u([int(np.dot(x, bits))])[0] + c, n)
    v0 = first_order_variance(g, fam, None, law, lambda m: 0.5 * u(m))
    v1 = first_order_variance(shifted, fam, None, law, lambda m: 0.5 * u(m) + c)
    assert v1 == pytest.approx(v0, rel=1e-9, abs=1e-12)
