"""Why complement pairs use the symmetric weighting.

A draw S reveals u(S) and u(S^c). Any split of the weight between the two
entries is unbiased; conditioning on the unordered pair gives the weighting
rho(S) / (q(S) + q(S^c)), whose variance is never larger. We enumerate
the exact variances on a law that favours large coalitions.
"""

import numpy as np

from probvalue import TargetSpec, make_family, sou_generate
from probvalue._bits import all_masks, complement
from probvalue.estimators import pair_design
from probvalue.families import rho_vector
from probvalue.sampling import prob, size_law
from probvalue.surrogate import FeatureBasis

n = 10
game = sou_generate(n, eta=0.5, sigma2=1.0, seed=6)
family = make_family("shapley", n)
T = TargetSpec.identity(n)
law = size_law(n, np.arange(1, n) ** 2.0)
S = all_masks(n)[1:-1]
q = prob(law, S)


def variance(scores):
    centred = scores - q @ scores
    return float(np.sum(q @ centred**2))


Omega, _, dy, _ = pair_design(game, family, T, law, FeatureBasis("fo", n), S)
print(f"symmetric (conditioned) weighting: {variance(Omega * dy[:, None]):.4f}")

y, yc = game.evaluate_batch(S, record=False), game.evaluate_batch(complement(S, n), record=False)
rs, rc = rho_vector(family, T, S), rho_vector(family, T, complement(S, n))
for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
    scores = (lam * rs * y[:, None] + (1 - lam) * rc * yc[:, None]) / q[:, None]
    print(f"ordered weighting, share {lam:.2f} on S:  {variance(scores):.4f}")
