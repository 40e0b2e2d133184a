"""
Regime boundaries in the (kappa1, kappa2) plane
===============================================

alpha_bar = 1 separates dissolution from stable aggregates, alpha_bar = 0
separates stable aggregates from unbounded growth.  Stable aggregates need
(n-2) kappa2 > kappa_m however large kappa1 is.
"""
from pathlib import Path

from aggrekin import bifurcation_sweep
from aggrekin.svg import line_chart

out = Path(__file__).with_name("output")
out.mkdir(exist_ok=True)
res = bifurcation_sweep((0.0, 5.0), (0.0, 5.0), {"n": 5, "kappa_m1": 1.0, "kappa_m": 1.0}, resolution=200)
res.grid_csv(out / "sweep_grid.csv")
line_chart({"alpha_bar = 1": tuple(res.curve_alpha1.T), "alpha_bar = 0": tuple(res.curve_alpha0.T)},
           out / "regime_boundaries.svg", xlabel="kappa1")

c1 = res.curve_alpha1
print(f"alpha_bar = 1 curve: kappa2 = {c1[0, 1]:.3f} at kappa1 = {c1[0, 0]:.3f}, "
      f"{c1[-1, 1]:.4f} at kappa1 = 5;  threshold kappa_m/(n-2) = {res.meta['threshold_k2']:.4f}")
c0 = res.curve_alpha0
print(f"alpha_bar = 0 curve starts at kappa1 = {c0[0, 0]:.3f} and ends at kappa2 = {c0[-1, 1]:.4f}")
