"""
Growth seen from infinity
=========================

In the variables u = p/sqrt(p+q), v = (2p+2q-nr)/sqrt(p+q), w = 1/sqrt(p+q)
unbounded growth becomes w -> 0 while (u, v) settle at (u*, v*).  The
deviation from the composite (layer plus slow) approximation shrinks like
eps for u, v and like eps**2 for w.
"""
from aggrekin import validate_params, verify_corollary1, verify_theorem2

params = validate_params(dict(n=5, kappa1=1.0, kappa2=1.0, kappa3=1.0, kappa_m1=1.0, kappa_m=0.2))

late = verify_corollary1(params, t_end=1e4)
print(f"t*w at t=1e4: {late.tw_final:.4f}   1/A* = {1 / late.A_star:.4f}")
print(f"u: {late.u_final:.5f} (u* {late.u_star:.5f})   v: {late.v_final:.5f} (v* {late.v_star:.5f})")

rep = verify_theorem2(params, u0=1.0, v0=0.0, eps_list=(1e-2, 5e-3, 2.5e-3))
for e in rep.sup_errors:
    print(f"eps={e['eps']:<7g} sup|u-.|={e['u']:.2e}  sup|v-.|={e['v']:.2e}  sup|w-.|={e['w']:.2e}")
for r in rep.ratios:
    print(f"halving eps: u x{r['u']:.2f}  v x{r['v']:.2f}  w x{r['w']:.2f}")
