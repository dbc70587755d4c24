"""Expected-improvement search over finite pools of point sets.

Run with ``python demos/03_bayesopt.py``.  A few minutes.
"""

import numpy as np

from setgp import (
    BOConfig,
    CandidatePool,
    CombinatorialProblem,
    FitConfig,
    JitterPolicy,
    SetObjective,
    generate_dataset,
    replicate,
)

fit_cfg = FitConfig.for_dimension(2, population=8, generations=4, refinement_steps=5)

# continuous sets: a pool of 300 random 10-point sets under the MEAN objective
obj = SetObjective("MEAN")
pool = CandidatePool(generate_dataset(obj, 300, 10, seed=0).sets)
for method in ["EI-DE", "EI-DS", "RANDOM"]:
    cfg = BOConfig(method, pool, obj, n_init=10, budget=20, fit_cfg=fit_cfg)
    records, summ = replicate(cfg, 5)
    print(f"{method:<7} hits {summ.hit_count}/5   median best after 0/10/20 iterations:",
          np.round(summ.median[[0, 10, 20]], 4))

# subsets of a ground set: the DS Gram goes singular, jitter rescues it
prob = CombinatorialProblem.random(12, 4, seed=0)
obj = SetObjective("COMBINATORIAL", problem=prob)
pool = CandidatePool.from_subsets(prob.ground, prob.all_subsets())
print(f"\ncombinatorial pool: {len(pool)} subsets of {len(prob.ground)} points")
jittered = FitConfig.for_dimension(2, population=8, generations=4, refinement_steps=5,
                                   jitter_policy=JitterPolicy.bound(5))
for method, cfg_ in [("EI-DS", fit_cfg), ("EI-DS", jittered), ("EI-DE", fit_cfg)]:
    records, summ = replicate(BOConfig(method, pool, obj, 10, 20, cfg_), 3)
    print(f"{records[0].method:<14} aborted {summ.aborted_count}/3, hits {summ.hit_count}/3",
          "" if not records[0].aborted else f"({records[0].abort_reason})")
