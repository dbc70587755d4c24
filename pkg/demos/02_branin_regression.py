"""GP regression on Branin set functions, DS against DE.

Run with ``python demos/02_branin_regression.py``.  A minute or so; the
datasets are smaller than the full 1000-set experiments.
"""

import numpy as np

from setgp import (
    FitConfig,
    SetObjective,
    fit_hyperparams,
    generate_dataset,
    loo_residuals,
    predict,
    q2,
    split,
)

cfg = FitConfig.for_dimension(2, population=10, generations=5, refinement_steps=10, seed=1)

for kind in ["MEAN", "MIN", "MAX"]:
    data = generate_dataset(SetObjective(kind), 300, 10, seed=0)
    train, test = split(data, 0.8, seed=0)
    for family in ["DS", "DE"]:
        rep = fit_hyperparams(train, family, cfg)
        pred = predict(rep.model, test.sets)
        th = "-" if rep.best_theta_H is None else f"{rep.best_theta_H:.3f}"
        print(f"{kind:<5}{family}  Q2={q2(test.responses, pred.mean):.4f}  "
              f"theta_X={rep.best_theta_X:.3f} theta_H={th}  ({rep.evaluations} NLL evaluations)")

# leave-one-out diagnostics for the last fit (MAX, DE)
z = np.array([r.standardized for r in loo_residuals(rep.model)])
print("LOO standardized residuals: mean %.3f, variance %.3f" % (z.mean(), z.var()))
zt = (test.responses - pred.mean) / pred.sd
print("test standardized residuals: mean %.3f, variance %.3f" % (zt.mean(), zt.var()))
