"""
Three regimes of the aggregate model
====================================

Only the cross-link breaking rate changes between the three runs.  The
equilibrium fraction alpha_bar decides what happens to the aggregate.
"""
from pathlib import Path

import numpy as np

from aggrekin import State, classify, run_regime_experiment, validate_params
from aggrekin.svg import line_chart

out = Path(__file__).with_name("output")
out.mkdir(exist_ok=True)
base = dict(n=5, kappa1=1.0, kappa2=1.0, kappa3=1.0, kappa_m1=1.0)

for km, horizon in ((0.6, 300.0), (0.93, 1e3), (0.2, 1e4)):
    params = validate_params({**base, "kappa_m": km})
    regime = classify(params)
    print(f"kappa_m={km}: alpha_bar={regime.alpha_bar:+.6f} -> {regime.tag.value}")

    # ConvergedToEquilibrium / ConvergedToZero / Growing
    verdict = run_regime_experiment(params, State(2.0, 4.0, 3.0), horizon=horizon, zero_tol=1e-2)
    print("   verdict:", verdict.kind.value, "final state:", np.round(verdict.final_state, 4))

    traj = verdict.trajectory
    keep = traj.times > 0
    series = {name: (traj.times[keep], traj.component(name)[keep]) for name in "pqr"}
    line_chart(series, out / f"regime_km{km}.svg", title=f"kappa_m = {km}", logx=True, logy=km == 0.2)
