"""Compare the estimator presets on one sum-of-unanimity game.

Every preset receives the same total query budget. The error is the
relative squared error against the closed-form semivalue.
"""

import numpy as np

from probvalue import METHODS, make_family, run_method, sou_generate
from probvalue.diagnostics import relative_sq_error
from probvalue.game import exact_sou_values

n, budget = 20, 2000
game = sou_generate(n, eta=0.25, sigma2=1.0, seed=1)
print(f"game with {len(game.terms)} unanimity terms on {n} players, budget {budget}")

for family_name in ("shapley", "banzhaf", "beta"):
    family = make_family(family_name, n, *{"banzhaf": (0.5,), "beta": (4, 1)}.get(family_name, ()))
    exact = exact_sou_values(game, family)
    print(f"\n{family.name}")
    for method in METHODS:
        try:
            report = run_method(method, game, family, None, budget, np.random.default_rng(7))
        except ValueError as exc:  # preset not defined for this family
            print(f"  {method:16s} skipped ({exc})")
            continue
        err = relative_sq_error(report.estimates, exact)
        print(f"  {method:16s} queries={report.queries:5d}  rel. sq. error={err:.3e}")
