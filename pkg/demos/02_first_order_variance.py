"""Replication MSE of a fixed-surrogate estimator against its exact variance.

For a surrogate that is not fitted on the sample, the estimator is a plain
mean of i.i.d. scores, so m * MSE equals the enumerated variance of one
score. A better surrogate shrinks that variance.
"""

import numpy as np

from probvalue import make_family, sou_generate
from probvalue.diagnostics import first_order_variance, mse_study
from probvalue.estimators import aipw_estimate
from probvalue.game import exact_sou_values
from probvalue.sampling import named_law
from probvalue.surrogate import FeatureBasis, SurrogateModel

n, m, R = 10, 32, 2000
game = sou_generate(n, eta=0.5, sigma2=1.0, seed=4)
family = make_family("shapley", n)
law = named_law("uniform", n)
exact = exact_sou_values(game, family)
basis = FeatureBasis("fo", n)

for label, shrink in (("zero surrogate", 0.0), ("half-way surrogate", 0.5), ("near-oracle surrogate", 0.95)):
    h = SurrogateModel(basis, np.r_[0.0, shrink * exact, 0.0, 0.0])
    V = first_order_variance(game, family, None, law, h)
    study = mse_study(lambda rng: aipw_estimate(game, family, None, law, basis, m, rng=rng, surrogate=h), exact, R, 0)
    print(f"{label:22s} V/m = {V / m:.4e}   replication MSE = {study.total_mse:.4e} +- {study.total_se:.1e}")
