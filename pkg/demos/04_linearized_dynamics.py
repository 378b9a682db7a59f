"""Linearized GD dynamics: per-eigencomponent growth factors.

Around a minimizer the update w -> w - eta * grad linearizes to
offset -> (I - eta * H) offset, so the offset component along the
eigenvector of eigenvalue lambda scales by (1 - eta * lambda) each step.
Instability (some |1 - eta * lambda| > 1) happens exactly when
lambda_max > 2 / eta.
"""
import numpy as np

import sharpfactor as sf

chain, target = sf.make_minimizer((3, 4, 3), seed=5)
hessian = sf.dense_hessian_at_minimum(chain, target)
lam = hessian.lambda_max
print(f"dims={chain.dims}, N={chain.num_params}, lambda_max={lam:.6f}")

steps = 50
for mult in (0.9, 1.0, 1.1):
    eta = mult * 2.0 / lam
    print()
    print(f"step size = {mult} * (2 / lambda_max); {steps} linearized steps")
    print(f"{'component':>10s} {'lambda':>12s} {'multiplier':>11s} "
          f"{'predicted':>12s} {'observed':>12s}")
    for label, vec in (("top", hessian.top_vector), ("bottom", hessian.bottom_vector)):
        start = sf.FactorChain.from_flat(chain.dims, chain.flatten() + 1e-8 * vec)
        offset0 = start.flatten() - chain.flatten()
        traj = sf.linearized_run(start, chain, hessian, eta, steps, target=target)
        observed = np.linalg.norm(traj.params[-1] - chain.flatten()) / np.linalg.norm(offset0)
        eig = lam if label == "top" else hessian.lambda_min
        multiplier = 1.0 - eta * eig
        print(f"{label:>10s} {eig:12.4e} {multiplier:11.4f} "
              f"{abs(multiplier) ** steps:12.4e} {observed:12.4e}")

print()
print("full GD matches the linearized growth while the offset stays small:")
blocks, report = sf.extremal_direction(chain, target)
eta = 1.1 * 2.0 / lam
start = sf.perturb(chain, blocks, 1e-10)
config = sf.GDConfig(step_size=eta, max_iters=steps, record_params=False,
                     stop_on_converged=False)
traj = sf.gd_run(start, target, config, reference=chain)
observed = np.sqrt(traj.norm_dist[-1] / traj.norm_dist[0])
print(f"distance growth over {steps} steps: gd {observed:.6e} "
      f"vs linear theory {1.2 ** steps:.6e}")
