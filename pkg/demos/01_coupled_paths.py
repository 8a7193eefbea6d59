"""One driving noise, many solvers.

The linear decay model jumps upward by eps whenever its internal clock
(lam times the running integral of the state) crosses an epoch of a
unit-rate Poisson stream.  Because every solver reads the *same* epoch
stream, their trajectories are directly comparable path by path -- the
whole strong-error machinery rests on this coupling.
"""

import numpy as np

import rtesim as rs

model = rs.builtin_linear_scalar(alpha=1.5, lam=200.0, eps=0.007)
x0, T, seed = [10.0], 2.0, 2024

# the exact jump-adapted path on replication 0's epochs
bundle = rs.PathBundle(seed, 0, model.jump_count)
exact = rs.exact_trajectory(model, bundle, x0, T)
print(f"exact path: {exact.jump_count} jumps, X(T) = {exact.endpoint[0]:.6f}")

# fixed-step variants on the very same epochs
for theta, rule in [(0.0, "euler"), (1.0, "euler"), (0.5, "trapezoidal")]:
    cfg = rs.SolverConfig(theta=theta, h=0.125, quadrature=rule)
    traj = rs.solve_trajectory(model, cfg, bundle, x0, T)
    err = abs(traj.endpoint[0] - exact.endpoint[0])
    print(f"  {cfg.variant():28s} X(T) = {traj.endpoint[0]:.6f}  |diff| = {err:.2e}")

# a single path's gap fluctuates with h; only the mean over many coupled
# paths decays at the theoretical order (see 02_convergence_order.py)
print("\npathwise endpoint gap vs step size (one path, same epochs):")
for h in (0.5, 0.25, 0.125, 0.0625):
    cfg = rs.SolverConfig(theta=0.5, h=h, quadrature="trapezoidal")
    traj = rs.solve_trajectory(model, cfg, bundle, x0, T)
    print(f"  h = {h:<7g} |X_T - exact| = {abs(traj.endpoint[0] - exact.endpoint[0]):.3e}")
