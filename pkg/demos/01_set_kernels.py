"""A tour of the two set kernels.

Run with ``python demos/01_set_kernels.py``.  Takes a second.
"""

import math

import numpy as np

from setgp import (
    DeepKernelParams,
    GroundSet,
    InnerKernelParams,
    KernelSpec,
    PointSet,
    condition_number,
    de_kernel,
    ds_gram_finite,
    ds_kernel,
    embed_distance,
    gram,
)

rng = np.random.default_rng(0)

# a point set is canonical: duplicates dropped, rows sorted
S = PointSet([[0.7, 0.2], [0.1, 0.9], [0.7, 0.2]])
print("canonical points:\n", S.points)

# the double sum kernel averages a Gaussian correlation over all cross pairs
T = PointSet(rng.random((4, 2)))
print("k0(S, T) =", ds_kernel(S, T, 0.3))

# embedding distance; never above sqrt(2), reached by far singletons as theta -> 0
for theta in [1.0, 0.1, 0.01, 0.001]:
    print(f"theta_X={theta:<6} d_E(corner, corner) = {embed_distance([[0, 0]], [[1, 1]], theta):.10f}")
print("sqrt(2)                           =", f"{math.sqrt(2):.10f}")

# the deep embedding kernel puts a Gaussian on top of that distance
p = DeepKernelParams(InnerKernelParams(0.3), theta_H=0.5)
print("k_DE(S, T) =", de_kernel(S, T, p))

# DS is not strictly positive definite: {a}, {b}, {a, b} give a singular Gram
xa, xb = rng.random(2), rng.random(2)
K = gram([[xa], [xb], [xa, xb]], KernelSpec("DS", 0.3))
print("DS Gram eigenvalues:", np.linalg.eigvalsh(K))
print("condition number:", condition_number(K))

# the same three sets under DE are fine
K = gram([[xa], [xb], [xa, xb]], KernelSpec("DE", 0.3, 0.5))
print("DE Gram eigenvalues:", np.linalg.eigvalsh(K))

# on a finite ground set the DS Gram is U^T K_X U, so q <= c subsets can still be singular
ground = GroundSet(rng.random((5, 2)))
subsets = [[0, 1, 4], [2, 3, 4], [0, 3, 4], [1, 2, 4]]
G = ds_gram_finite(ground, subsets, 0.3)
print("4 subsets of 5 points, smallest eigenvalue:", np.linalg.eigvalsh(G)[0])
