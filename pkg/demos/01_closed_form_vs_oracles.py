"""Closed-form top Hessian eigenvalues against independent oracles.

Builds random zero-loss factor chains, evaluates the closed-form top
eigenvalue (general Kronecker-sum route plus the scalar-chain and depth-2
shortcuts), and compares against two independent references: the dense
Hessian 2 J'J assembled from Kronecker blocks, and a finite-difference
Hessian built from gradient central differences.
"""
import numpy as np

import sharpfactor as sf

print("=" * 72)
print("general closed form vs dense and finite-difference oracles")
print("=" * 72)
for seed in range(5):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(2, 6))
    d0, dL = int(rng.integers(2, 7)), int(rng.integers(2, 7))
    interior = [int(rng.integers(min(d0, dL), 8)) for _ in range(depth - 1)]
    dims = (d0, *interior, dL)
    chain, target = sf.make_minimizer(dims, seed=seed)

    general = sf.lambda_max_general(chain, target)
    dense = sf.dense_hessian_at_minimum(chain, target)
    fd = sf.fd_dense_hessian(chain, target)

    rel_dense = abs(general.lambda_max - dense.lambda_max) / dense.lambda_max
    rel_fd = abs(general.lambda_max - fd.lambda_max) / general.lambda_max
    print(f"dims={dims} N={chain.num_params:3d}  lambda_max={general.lambda_max:12.6f}"
          f"  vs dense {rel_dense:.2e}  vs fd {rel_fd:.2e}"
          f"  nullity {dense.nullity()} >= {chain.num_params - dL * d0}")

print()
print("=" * 72)
print("specializations recover the general value")
print("=" * 72)
chain, target = sf.make_minimizer((1, 6, 3, 5, 4, 2, 7, 1), seed=11)
scalar = sf.lambda_max_scalar_chain(chain, target)
general = sf.lambda_max_general(chain, target)
print(f"scalar chain {chain.dims}: scalar route {scalar.lambda_max:.12e}")
print(f"{'':>24s} general route {general.lambda_max:.12e}")

chain, target = sf.make_minimizer((10, 20, 8), seed=12)
depth2 = sf.lambda_max_depth2(chain.factors[1], chain.factors[0].T, target)
general = sf.lambda_max_general(chain, target)
print(f"depth-2 {chain.dims}: depth-2 route {depth2.lambda_max:.12e}")
print(f"{'':>20s} general route {general.lambda_max:.12e}")

print()
print("=" * 72)
print("the extremal direction attains the eigenvalue; random ones stay below")
print("=" * 72)
chain, target = sf.make_minimizer((4, 6, 5, 4), seed=21)
blocks, report = sf.extremal_direction(chain, target)
achieved = sf.second_directional(chain, target, blocks)
print(f"lambda_max          = {report.lambda_max:.12e}")
print(f"value along extremal = {achieved:.12e}")
rng = np.random.default_rng(0)
values = [sf.second_directional(chain, target, sf.random_unit_direction(chain.dims, rng))
          for _ in range(2000)]
print(f"best of 2000 random unit directions = {max(values):.12e} "
      f"({max(values) / report.lambda_max:.1%} of lambda_max)")

print()
print("=" * 72)
print("sharpness varies along the scale-invariance manifold")
print("=" * 72)
chain, target = sf.make_minimizer((3, 5, 4, 3), seed=31)
print(f"{'scale c':>8s} {'loss':>10s} {'lambda_max':>16s}")
for c in (0.5, 1.0, 2.0, 4.0):
    moved = sf.rescale_adjacent(chain, 1, c)
    lam = sf.lambda_max_general(moved, target).lambda_max
    print(f"{c:8.1f} {sf.loss(moved, target):10.2e} {lam:16.6f}")
