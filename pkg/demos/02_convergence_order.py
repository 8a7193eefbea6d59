"""Strong convergence orders on the linear benchmark.

Reproduces the two regimes at demo scale (M=60 instead of 200): with noise
comparable to the drift the Euler/euler pairing converges like sqrt(h),
while in the small-noise regime the order-two pairing shows first-order
behaviour over practical step sizes.
"""

import numpy as np

import rtesim as rs

SEED = 2024
HS = [2.0 ** -k for k in range(2, 8)]


def study(name, model, configs, M=60):
    rep = rs.strong_error(model, "exact", configs, [10.0], 5.0, M, SEED,
                          threads=2)
    fit = rs.fit_order(rep)
    print(f"\n{name}  (M={M})")
    print("      h     mean |X(T)-X_T|   std err")
    for r in rep.rows:
        print(f"  {r.h:9.5f}   {r.mean_abs_error:11.5e}  {r.std_error:9.2e}")
    print(f"  fitted order: {fit.slope:.3f}   (r^2 = {fit.r_squared:.4f})")
    return fit


m1 = rs.builtin_linear_scalar(alpha=1.5, lam=200.0, eps=0.007)
study("explicit Euler + plain rate quadrature, strong-noise set",
      m1, [rs.SolverConfig(theta=0.0, h=h, quadrature="euler") for h in HS])
study("trapezoidal pairing, strong-noise set",
      m1, [rs.SolverConfig(theta=0.5, h=h, quadrature="trapezoidal") for h in HS])

m2 = rs.builtin_linear_scalar(alpha=1.5, lam=500.0, eps=0.001)
study("trapezoidal pairing, small-noise set",
      m2, [rs.SolverConfig(theta=0.5, h=h, quadrature="trapezoidal") for h in HS])
