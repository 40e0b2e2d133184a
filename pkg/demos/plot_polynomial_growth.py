"""
Polynomial growth and the square-root law
=========================================

When alpha_bar < 0 the aggregate grows without bound: p like t, q and r like
t**2.  The leading coefficients come from the slow constants of the
compactified system, and eliminating t gives dr/dt = C sqrt(r).
"""
import numpy as np

from aggrekin import (
    State,
    find_slow_constants,
    fit_growth,
    fit_sqrt_law,
    simulate,
    slow_growth_constant,
    validate_params,
    IntegratorConfig,
)

params = validate_params(dict(n=5, kappa1=1.0, kappa2=1.0, kappa3=1.0, kappa_m1=1.0, kappa_m=0.2))
sc = find_slow_constants(params, epsilon=0.4)
print(f"u* = {sc.u_star:.6f}  v* = {sc.v_star:.6f}  A* = {sc.A_star:.6f}")

# about two million steps; the compiled engine keeps this around a second
t_eval = np.geomspace(1.0, 1e4, 400)
traj = simulate(params, State(2.0, 4.0, 3.0), 1e4, IntegratorConfig(rtol=1e-10, t_eval=t_eval))

fit = fit_growth(traj, (1e3, 1e4))
print(f"exponents  p {fit.exponent_p:.3f}  q {fit.exponent_q:.3f}  r {fit.exponent_r:.3f}")
print(f"coeff_q {fit.coeff_q:.6f}  vs (A*)^2  {sc.A_star**2:.6f}")
print(f"coeff_p {fit.coeff_p:.6f}  vs u* A*   {sc.u_star * sc.A_star:.6f}")

C = slow_growth_constant(params)
print(f"C = A* sqrt(8/n) = {C:.6f};  fitted slope of dr/dt against sqrt(r): {fit_sqrt_law(traj, (1e3, 1e4), params):.6f}")
