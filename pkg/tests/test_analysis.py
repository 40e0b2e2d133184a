import math

import numpy as np
import pytest

from aggrekin import (
    ConditionViolated,
    Inconclusive,
    InadmissibleState,
    IntegratorConfig,
    NonPositiveComponent,
    State,
    Status,
    Trajectory,
    alpha_bar_values,
    bifurcation_sweep,
    classify,
    fit_growth,
    level_curve,
    run_regime_experiment,
    slow_growth_constant,
    transform_equivalence,
    verify_corollary1,
    verify_theorem2,
    worker_count,
)
from aggrekin.analysis import DEFAULT_INIT, random_admissible_states

FIXED = {"n": 5, "kappa_m1": 1.0, "kappa_m": 1.0}


def k2_on_level(k1, level, n=5, km1=1.0, km=1.0):
    """kappa2 solving alpha_bar = level, from the polynomial forms of the two conditions."""
    if level == 1:
        return (km * (k1 + km1) * (n - 2) + km**2 * (n - 1)) / (k1 * (n - 2) ** 2)
    return n * km * (2 * (k1 + km1) * (n - 2) + km * n * (n - 1)) / (4 * k1 * (n - 2) ** 2)


# -- growth fits -------------------------------------------------------------

def synthetic(times, p, q, r):
    states = np.stack([p(times), q(times), r(times)], axis=1)
    return Trajectory(times, states, Status.REACHED_T_END, ("p", "q", "r"))


def test_fit_growth_exact_power_law():
    t = np.geomspace(1e3, 1e4, 50)
    fit = fit_growth(synthetic(t, lambda t: 3 * t, lambda t: 5 * t**2, lambda t: 2 * t**2), (1e3, 1e4))
    np.testing.assert_allclose([fit.exponent_p, fit.exponent_q, fit.exponent_r], [1, 2, 2], atol=1e-10)
    np.testing.assert_allclose([fit.coeff_p, fit.coeff_q, fit.coeff_r], [3, 5, 2], rtol=1e-10)
    assert fit.rms_residual < 1e-12
    assert fit.fit_window[0] < fit.fit_window[1]


def test_fit_growth_rejects_non_positive():
    t = np.linspace(1.0, 10.0, 20)
    traj = synthetic(t, lambda t: t - 5, lambda t: t**2, lambda t: t**2)
    with pytest.raises(NonPositiveComponent):
        fit_growth(traj, (1.0, 10.0))


# -- regime experiments --------------------------------------------------------

def test_stable_verdict(fig3):
    v = run_regime_experiment(fig3, horizon=300.0)
    assert v.kind.value == "ConvergedToEquilibrium"
    assert v.distance < 1e-6
    assert v.metrics["t_within_eq_tol"] <= 200.0
    assert v.regime == classify(fig3).tag.value
    assert v.to_dict()["thresholds"]["eq_tol"] == 1e-6


def test_dissolution_verdict(fig5):
    v = run_regime_experiment(fig5)
    assert v.kind.value == "ConvergedToZero"
    assert v.metrics["t_below_zero_tol"] < 1e5
    assert v.metrics["norm_monotone_from"] < v.metrics["t_below_zero_tol"]
    assert v.regime == "Dissolution"


def test_growth_verdict_and_boundary_approach(fig4):
    v = run_regime_experiment(fig4)
    assert v.kind.value == "Growing" and v.regime == "PolyGrowth"
    assert v.fit.exponent_q == pytest.approx(2.0, abs=0.05)
    traj = v.trajectory
    p, q, r = traj.states.T
    tail = traj.times >= 10.0
    assert np.all((5 * r - p - 2 * q)[tail] / q[tail] >= -1e-6)
    ratio = 2 * q / (5 * r)
    assert abs(ratio[-1] - 1) < abs(ratio[np.searchsorted(traj.times, 100.0)] - 1)
    assert abs(ratio[-1] - 1) < 1e-2


def test_inconclusive_on_short_horizon(fig5):
    with pytest.raises(Inconclusive):
        run_regime_experiment(fig5, horizon=1.0)


def test_inadmissible_init(fig3):
    with pytest.raises(InadmissibleState):
        run_regime_experiment(fig3, init=State(0.0, 1.0, 2.0), horizon=1.0)


# -- slow growth law -----------------------------------------------------------

def test_slow_growth_constant(fig3, fig4):
    c = slow_growth_constant(fig4)
    assert c == pytest.approx(0.134742 * math.sqrt(8 / 5), rel=1e-5)
    assert c == pytest.approx(0.170437, abs=1e-6)
    with pytest.raises(ConditionViolated):
        slow_growth_constant(fig3)


# -- compactified dynamics -------------------------------------------------------

def test_error_scaling_report_shape(fig4):
    rep = verify_theorem2(fig4, eps_list=(2e-2, 1e-2))
    assert len(rep.sup_errors) == 2 and len(rep.ratios) == 1
    assert rep.ratios[0]["w"] > rep.ratios[0]["u"]
    with pytest.raises(ConditionViolated):
        verify_theorem2(fig4.replace(kappa_m=0.6))
    with pytest.raises(ValueError):
        verify_theorem2(fig4, u0=0.0)


def test_late_time_limits(fig4):
    rep = verify_corollary1(fig4, t_end=1e4)
    assert rep.tw_rel_dev < 0.02
    assert rep.u_rel_dev < 0.01 and rep.v_rel_dev < 0.01
    assert 1 / rep.A_star == pytest.approx(7.4216, abs=1e-4)


def test_transform_equivalence_smoke(fig3, rng):
    s = random_admissible_states(5, 1, rng)[0]
    for kind in ("blowup", "compact"):
        rep = transform_equivalence(fig3, s, kind)
        assert rep.max_rel_deviation < 1e-6 and rep.t_end > 0
    with pytest.raises(ValueError):
        transform_equivalence(fig3, s, "polar")


# -- bifurcation sweep -------------------------------------------------------------

def test_level_curves_against_closed_form():
    k1 = np.linspace(0.5, 5.0, 10)
    for level in (1, 0):
        pts = level_curve(k1, float(level), (0.0, 5.0), FIXED)
        np.testing.assert_allclose(pts[:, 1], k2_on_level(pts[:, 0], level), rtol=1e-10)
        vals = alpha_bar_values(5, pts[:, 0], pts[:, 1], 1.0, 1.0)
        assert np.all(np.abs(vals - level) < 1e-8)


def test_sweep_shape_and_metadata(tmp_path):
    res = bifurcation_sweep(resolution=50)
    assert res.grid.shape == (50, 50)
    assert res.meta["n_assumed"] is True and res.fixed["n"] == 5
    assert res.k1[0] > 0 and res.k1[-1] == 5.0
    text = res.grid_csv(tmp_path / "g.csv")
    assert text.splitlines()[0] == "k1,k2,alpha_bar"
    assert len(text.splitlines()) == 50 * 50 + 1
    assert res.curve_csv(1).splitlines()[0] == "k1,k2"
    assert bifurcation_sweep(fixed={"n": 5}, resolution=10).meta["n_assumed"] is False


def test_sweep_resolution_stable():
    coarse = bifurcation_sweep(resolution=100)
    fine = bifurcation_sweep(resolution=200)
    spacing = 5.0 / 100
    for a, b in ((coarse.curve_alpha1, fine.curve_alpha1), (coarse.curve_alpha0, fine.curve_alpha0)):
        common = np.intersect1d(np.round(a[:, 0], 12), np.round(b[:, 0], 12))
        assert common.size > 10
        ka = np.interp(common, a[:, 0], a[:, 1])
        kb = np.interp(common, b[:, 0], b[:, 1])
        assert np.max(np.abs(ka - kb)) < spacing


def test_worker_count(monkeypatch):
    monkeypatch.setenv("AGGREKIN_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("AGGREKIN_THREADS", "zero")
    assert worker_count() == 1


def test_threaded_error_scaling_is_deterministic(fig4, monkeypatch):
    monkeypatch.setenv("AGGREKIN_THREADS", "1")
    a = verify_theorem2(fig4, eps_list=(2e-2, 1e-2)).sup_errors
    monkeypatch.setenv("AGGREKIN_THREADS", "2")
    b = verify_theorem2(fig4, eps_list=(2e-2, 1e-2)).sup_errors
    assert a == b
