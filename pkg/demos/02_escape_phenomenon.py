"""Gradient descent escaping dynamically unstable minima.

Starts GD a tiny radius away from an exact minimizer, along the direction
of largest curvature, and sweeps the step size around the stability
threshold 2 / lambda_max. Below the threshold the iterates contract back;
above it they leave the basin (a catapult in the loss) no matter how small
the radius, and with a longer budget they settle on a different minimizer.
"""
import numpy as np

import sharpfactor as sf

DEPTH2_DIMS = (20, 20, 10)     # target = left @ right.T, left 10x20, right 20x20
SCALAR_DIMS = (1, 7, 2, 1, 6, 3, 4, 1, 3, 6, 3, 7, 7, 6, 8, 1)   # 15 layers

for dims, label in ((SCALAR_DIMS, "15-layer scalar factorization"),
                    (DEPTH2_DIMS, "depth-2 matrix factorization")):
    print("=" * 76)
    print(f"{label}, dims={dims}")
    print("=" * 76)
    for radius in (1e-12, 1e-9):
        # marginal (mult 1.0) cells run their whole budget, so keep it small here
        result = sf.escape_experiment(dims, seeds=[0, 1],
                                      eta_multipliers=[0.9, 1.0, 1.1, 2.0],
                                      radius=radius, max_iters=10_000)
        print(f"-- initialization radius {radius:g}")
        print(f"{'seed':>4s} {'mult':>5s} {'class':>9s} {'escaped':>7s} "
              f"{'at iter':>7s} {'catapult':>8s} {'dist ratio':>10s}")
        for v in result.verdicts:
            at = "-" if v.escape_iteration is None else str(v.escape_iteration)
            print(f"{v.seed:4d} {v.eta_multiplier:5.2f} {v.classification:>9s} "
                  f"{str(v.escaped):>7s} {at:>7s} {str(v.catapult):>8s} "
                  f"{v.distance_ratio:10.2e}")
    print()

print("=" * 76)
print("with the escape stop disabled, GD re-converges to ANOTHER minimizer")
print("=" * 76)
result = sf.escape_experiment((4, 5, 4), seeds=[1], eta_multipliers=[1.2],
                              radius=1e-9, max_iters=60_000, stop_at_escape=False)
v = result.verdicts[0]
print(f"escaped at iteration {v.escape_iteration}, "
      f"final loss {v.final_loss:.2e} (zero again), "
      f"final distance {v.distance_ratio:.1e} x initial "
      f"-> converged elsewhere: {v.converged_elsewhere}")

traj = result.trajectories[(1, 1.2)]
peak = int(np.argmax(traj.loss))
print(f"loss catapult: starts {traj.loss[0]:.2e}, "
      f"peaks {traj.loss[peak]:.2e} at iteration {int(traj.iterations[peak])}, "
      f"ends {traj.loss[-1]:.2e}")
