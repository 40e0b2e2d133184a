"""Numerical experiments on the three parameter regimes.

Each experiment returns a plain dataclass report whose ``to_dict`` echoes
every threshold it used, so the JSON written by the command line front end is
self-describing.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ConditionViolated,
    Inconclusive,
    InadmissibleState,
    NoPositiveEquilibrium,
    NonPositiveComponent,
)
from .integrator import CompiledField, IntegratorConfig, Trajectory, integrate, integrate_augmented
from .model import (
    ModelParams,
    State,
    alpha_bar_values,
    classify,
    equilibrium,
    growth_condition,
    rhs_kernel,
    validate_params,
)
from .transforms import (
    blowup_compiled,
    blowup_t_clock,
    compact_array,
    compact_compiled,
    compact_t_clock,
    find_slow_constants,
    from_blowup,
    from_compact,
    layer_u_field,
    layer_v_field,
    reduced_manifold,
    to_blowup,
    to_compact,
    BlowupState,
    CompactState,
)

__all__ = [
    "GrowthFit",
    "Verdict",
    "VerdictKind",
    "SweepResult",
    "ErrorScalingReport",
    "LateTimeReport",
    "EquivalenceReport",
    "original_field",
    "simulate",
    "run_regime_experiment",
    "fit_growth",
    "verify_theorem2",
    "verify_corollary1",
    "bifurcation_sweep",
    "level_curve",
    "slow_growth_constant",
    "fit_sqrt_law",
    "transform_equivalence",
    "random_admissible_states",
    "constraint_residuals",
    "worker_count",
]

DEFAULT_INIT = State(2.0, 4.0, 3.0)


def worker_count() -> int:
    """Parallelism cap from ``AGGREKIN_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("AGGREKIN_THREADS", "1")))
    except ValueError:
        return 1


def original_field(params: ModelParams) -> CompiledField:
    return CompiledField(rhs_kernel, params.as_array(), 3)


def simulate(params: ModelParams, init: State, t_end: float,
             config: IntegratorConfig | None = None) -> Trajectory:
    """Integrate the original system from ``init`` over ``[0, t_end]``."""
    return integrate(original_field(params), init.as_array(), (0.0, t_end), config, names=("p", "q", "r"))


def constraint_residuals(states, n: int) -> np.ndarray:
    """Relative slack of the admissibility inequalities, shape ``(N, 2)``.

    Columns are ``(n r - p - 2q)/scale`` and ``(q - r)/scale`` with
    ``scale = max(1, n r)``; admissible states have both columns >= 0.
    """
    y = np.atleast_2d(np.asarray(states, dtype=float))
    p, q, r = y[:, 0], y[:, 1], y[:, 2]
    scale = np.maximum(1.0, n * np.abs(r))
    return np.stack([(n * r - p - 2.0 * q) / scale, (q - r) / scale], axis=1)


def random_admissible_states(n: int, count: int, rng: np.random.Generator,
                             r_range=(0.2, 5.0), margin: float = 0.02) -> list[State]:
    """Admissible states strictly inside the constraint set."""
    out = []
    for _ in range(count):
        r = rng.uniform(*r_range)
        q_lo, q_hi = r, n * r / 2.0
        q = rng.uniform(q_lo + margin * (q_hi - q_lo), q_hi - margin * (q_hi - q_lo))
        free = n * r - 2.0 * q
        p = rng.uniform(margin * free, (1.0 - margin) * free)
        out.append(State(p, q, r))
    return out


# ---------------------------------------------------------------------------
# Growth fits

@dataclass(frozen=True)
class GrowthFit:
    exponent_p: float
    exponent_q: float
    exponent_r: float
    coeff_p: float
    coeff_q: float
    coeff_r: float
    fit_window: tuple[float, float]
    rms_residual: float
    leading_powers: tuple[int, int, int]

    def to_dict(self) -> dict:
        return asdict(self)


def fit_growth(traj: Trajectory, window: tuple[float, float]) -> GrowthFit:
    """Log-log least-squares slopes of ``p, q, r`` over ``window``.

    Coefficients are the values at the end of the window divided by
    ``t**k`` with ``k`` the integer power nearest to the fitted slope, which
    is the form of the asymptotic ansatz; dividing by the fitted non-integer
    power would fold the slowly decaying corrections into the coefficient.
    """
    t_lo, t_hi = map(float, window)
    if not t_lo < t_hi:
        raise ValueError(f"empty fit window {window}")
    t = traj.times
    mask = (t >= t_lo * (1 - 1e-12)) & (t <= t_hi * (1 + 1e-12))
    if mask.sum() < 3:
        raise ValueError(f"trajectory has fewer than 3 samples in {window}")
    ts, ys = t[mask], traj.states[mask, :3]
    if np.any(ts <= 0) or np.any(ys <= 0):
        raise NonPositiveComponent("log-log fit needs positive times and components on the window")
    lt = np.log(ts)
    ly = np.log(ys)
    design = np.stack([lt, np.ones_like(lt)], axis=1)
    sol, *_ = np.linalg.lstsq(design, ly, rcond=None)
    slopes = sol[0]
    resid = ly - design @ sol
    powers = tuple(int(round(s)) for s in slopes)
    end = ys[-1]
    coeffs = [float(end[i] / ts[-1] ** powers[i]) for i in range(3)]
    return GrowthFit(
        exponent_p=float(slopes[0]), exponent_q=float(slopes[1]), exponent_r=float(slopes[2]),
        coeff_p=coeffs[0], coeff_q=coeffs[1], coeff_r=coeffs[2],
        fit_window=(float(ts[0]), float(ts[-1])),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
        leading_powers=powers,
    )


def fit_sqrt_law(traj: Trajectory, window: tuple[float, float], params: ModelParams) -> float:
    """Least-squares slope through the origin of ``dr/dt`` against ``sqrt(r)``."""
    t = traj.times
    mask = (t >= window[0]) & (t <= window[1])
    ys = traj.states[mask]
    f = original_field(params)
    rdot = np.array([f(0.0, y)[2] for y in ys])
    x = np.sqrt(ys[:, 2])
    return float(x @ rdot / (x @ x))


def slow_growth_constant(params: ModelParams) -> float:
    """``C`` in the single-variable growth law ``dr/dt = C sqrt(r)``.

    Follows from ``r ~ (2/n) (A* t)^2``: eliminating ``t`` gives
    ``C = A* sqrt(8/n)``.
    """
    if not growth_condition(params):
        raise ConditionViolated("the sqrt growth law needs alpha_bar < 0")
    a_star = find_slow_constants(params, 1.0).A_star
    return a_star * math.sqrt(8.0 / params.n)


# ---------------------------------------------------------------------------
# Regime experiments

class VerdictKind(str, Enum):
    CONVERGED_TO_ZERO = "ConvergedToZero"
    CONVERGED_TO_EQUILIBRIUM = "ConvergedToEquilibrium"
    GROWING = "Growing"


@dataclass
class Verdict:
    kind: VerdictKind
    regime: str
    alpha_bar: float
    t_final: float
    final_state: tuple[float, float, float]
    distance: float | None = None
    fit: GrowthFit | None = None
    metrics: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    trajectory: Trajectory | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind.value,
            "regime": self.regime,
            "alpha_bar": self.alpha_bar,
            "t_final": self.t_final,
            "final_state": list(self.final_state),
            "distance": self.distance,
            "fit": None if self.fit is None else self.fit.to_dict(),
            "metrics": self.metrics,
            "thresholds": self.thresholds,
        }
        return d


def _sample_times(horizon: float, n_lin: int = 2001, n_log: int = 400) -> np.ndarray:
    lin = np.linspace(0.0, horizon, n_lin)
    log = np.geomspace(min(1e-2, horizon / 10), horizon, n_log)
    return np.unique(np.concatenate([lin, log]))


def _monotone_from(times, values) -> float:
    """Earliest sample time after which ``values`` never increases."""
    d = np.diff(values)
    up = np.flatnonzero(d > 0)
    return float(times[0] if up.size == 0 else times[up[-1] + 1])


def run_regime_experiment(params: ModelParams, init: State = DEFAULT_INIT, horizon: float | None = None,
                          zero_tol: float = 1e-3, eq_tol: float = 1e-6,
                          growth_min_exponent: float = 1.5,
                          config: IntegratorConfig | None = None) -> Verdict:
    """Integrate from ``init`` and decide what the trajectory does.

    The verdict is read off the trajectory: the norm falling below
    ``zero_tol``, the relative distance to the closed-form equilibrium falling
    below ``eq_tol``, or a log-log slope of ``q`` above ``growth_min_exponent``
    over the last decade of the horizon.  ``horizon`` defaults to 1e5 (or 1e4
    when the growth condition holds, where 1e4 already needs ~2e6 steps).
    """
    bad = init.violations(params.n)
    if bad:
        raise InadmissibleState(f"initial state {init} violates: {'; '.join(bad)}")
    regime = classify(params)
    if horizon is None:
        horizon = 1e4 if growth_condition(params) else 1e5
    if config is None:
        # Relative error control only: the zero state is approached geometrically.
        config = IntegratorConfig(rtol=1e-10, atol=1e-250)
    config = IntegratorConfig(**{**config.__dict__, "t_eval": _sample_times(horizon)})
    traj = simulate(params, init, horizon, config)
    y_end = traj.final
    norms = np.linalg.norm(traj.states, axis=1)
    res = constraint_residuals(traj.states, params.n)
    thresholds = {"zero_tol": zero_tol, "eq_tol": eq_tol, "growth_min_exponent": growth_min_exponent,
                  "horizon": horizon, "rtol": config.rtol, "atol": config.atol}
    common = dict(regime=regime.tag.value, alpha_bar=regime.alpha_bar, t_final=traj.t_final,
                  final_state=tuple(float(x) for x in y_end), thresholds=thresholds, trajectory=traj)
    metrics = {"min_constraint_slack": float(res.min()), "nsteps": traj.nsteps}

    if norms[-1] < zero_tol:
        below = np.flatnonzero(norms < zero_tol)
        metrics.update(t_below_zero_tol=float(traj.times[below[0]]),
                       norm_monotone_from=_monotone_from(traj.times, norms),
                       final_norm=float(norms[-1]))
        return Verdict(VerdictKind.CONVERGED_TO_ZERO, metrics=metrics, **common)

    try:
        eq = equilibrium(params)
    except NoPositiveEquilibrium:
        eq = None
    if eq is not None:
        target = eq.state.as_array()
        dist = float(np.linalg.norm(y_end - target) / np.linalg.norm(target))
        if dist < eq_tol:
            rel = np.linalg.norm(traj.states - target, axis=1) / np.linalg.norm(target)
            within = np.flatnonzero(rel >= eq_tol)
            metrics["t_within_eq_tol"] = float(traj.times[within[-1] + 1]) if within.size else 0.0
            return Verdict(VerdictKind.CONVERGED_TO_EQUILIBRIUM, distance=dist, metrics=metrics, **common)

    if np.all(y_end > 0):
        fit = fit_growth(traj, (horizon / 10.0, horizon))
        if fit.exponent_q > growth_min_exponent:
            n = params.n
            metrics["nr_over_2q_final"] = float(n * y_end[2] / (2.0 * y_end[1]))
            return Verdict(VerdictKind.GROWING, fit=fit, metrics=metrics, **common)
    raise Inconclusive(
        f"no criterion met by t={horizon:g}: final state {y_end}, thresholds {thresholds}"
    )


# ---------------------------------------------------------------------------
# Compactified dynamics: error scaling and late-time limits

@dataclass
class ErrorScalingReport:
    u0: float
    v0: float
    eps_list: list[float]
    sigma_max: float
    A_star: float
    sup_errors: list[dict]
    ratios: list[dict]

    def to_dict(self) -> dict:
        return asdict(self)


def _composite_errors(params: ModelParams, u0: float, v0: float, eps: float, sigma_max: float,
                     a_star: float, cfg: IntegratorConfig) -> dict:
    tau_max = sigma_max / eps
    full = integrate(compact_compiled(params), [u0, v0, eps], (0.0, tau_max), cfg, names=("u", "v", "w"))
    u_layer = integrate(lambda t, y: [layer_u_field(y[0], v0, params)], [u0], (0.0, tau_max), cfg)
    v_layer = integrate(lambda s, y: [layer_v_field(y[0], 1.0, params)], [v0], (0.0, sigma_max), cfg)
    tau = np.unique(np.concatenate([
        np.linspace(0.0, min(tau_max, 50.0), 5001), np.linspace(0.0, tau_max, 20001),
    ]))
    y = full(tau)
    v_slow = v_layer(eps * tau)[:, 0]
    u_approx = u_layer(tau)[:, 0] - reduced_manifold(v0, params) + np.array(
        [reduced_manifold(v, params) for v in v_slow]
    )
    w_approx = eps * (1.0 + 2.0 * a_star * eps**2 * tau) ** -0.5
    return {
        "eps": eps,
        "u": float(np.max(np.abs(y[:, 0] - u_approx))),
        "v": float(np.max(np.abs(y[:, 1] - v_slow))),
        "w": float(np.max(np.abs(y[:, 2] - w_approx))),
    }


def verify_theorem2(params: ModelParams, u0: float = 1.0, v0: float = 0.0,
                    eps_list: Sequence[float] = (1e-2, 5e-3, 2.5e-3), sigma_max: float = 10.0,
                    config: IntegratorConfig | None = None) -> ErrorScalingReport:
    """Sup-norm deviation of the compactified flow from its composite
    approximation for each ``eps``, and the ratios between successive ``eps``.

    The composite approximation is the initial-layer solution for ``u``, the
    reduced ``v`` flow on the slow time ``sigma = eps*tau`` and the closed-form
    slow ``w``.  The supremum is taken over ``sigma in [0, sigma_max]``,
    which covers both layers; afterwards every error only decays.
    """
    if not growth_condition(params):
        raise ConditionViolated("the compactified limit needs alpha_bar < 0")
    if not u0 > 0:
        raise ValueError("u0 must be positive")
    a_star = find_slow_constants(params, min(eps_list)).A_star
    cfg = config or IntegratorConfig(rtol=1e-11, atol=1e-14, dense_output=True)
    cfg = IntegratorConfig(**{**cfg.__dict__, "dense_output": True})
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        errors = list(pool.map(
            lambda e: _composite_errors(params, u0, v0, e, sigma_max, a_star, cfg), eps_list,
        ))
    ratios = [
        {"eps_pair": [a["eps"], b["eps"]], **{k: a[k] / b[k] for k in ("u", "v", "w")}}
        for a, b in zip(errors, errors[1:])
    ]
    return ErrorScalingReport(u0, v0, list(eps_list), sigma_max, a_star, errors, ratios)


@dataclass
class LateTimeReport:
    t_end: float
    A_star: float
    u_star: float
    v_star: float
    tw_final: float
    tw_rel_dev: float
    u_final: float
    u_rel_dev: float
    v_final: float
    v_rel_dev: float
    tail_window: tuple[float, float]
    tail_max_tw_rel_dev: float
    series: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("series")
        return d


def verify_corollary1(params: ModelParams, init: State = DEFAULT_INIT, t_end: float = 1e4,
                      tail: tuple[float, float] | None = None,
                      config: IntegratorConfig | None = None) -> LateTimeReport:
    """Late-time behaviour of ``(u, v, w)`` along an original trajectory:
    ``t*w -> 1/A*``, ``u -> u*``, ``v -> v*``."""
    if not growth_condition(params):
        raise ConditionViolated("late-time limits need alpha_bar < 0")
    w0 = to_compact(init, params.n).w
    sc = find_slow_constants(params, w0)
    tail = tail or (t_end / 10.0, t_end)
    t_eval = np.unique(np.concatenate([np.geomspace(1.0, t_end, 200), np.linspace(tail[0], tail[1], 101)]))
    cfg = config or IntegratorConfig(rtol=1e-10, atol=1e-12)
    cfg = IntegratorConfig(**{**cfg.__dict__, "t_eval": t_eval})
    traj = simulate(params, init, t_end, cfg)
    uvw = compact_array(traj.states, params.n)
    tw = traj.times * uvw[:, 2]
    in_tail = (traj.times >= tail[0]) & (traj.times <= tail[1])
    target = 1.0 / sc.A_star
    u_end, v_end = float(uvw[-1, 0]), float(uvw[-1, 1])
    return LateTimeReport(
        t_end=float(traj.times[-1]),
        A_star=sc.A_star, u_star=sc.u_star, v_star=sc.v_star,
        tw_final=float(tw[-1]), tw_rel_dev=float(abs(tw[-1] - target) / target),
        u_final=u_end, u_rel_dev=abs(u_end - sc.u_star) / abs(sc.u_star),
        v_final=v_end, v_rel_dev=abs(v_end - sc.v_star) / abs(sc.v_star),
        tail_window=tuple(tail),
        tail_max_tw_rel_dev=float(np.max(np.abs(tw[in_tail] - target)) / target),
        series={"t": traj.times, "u": uvw[:, 0], "v": uvw[:, 1], "w": uvw[:, 2]},
    )


# ---------------------------------------------------------------------------
# Transform equivalence

@dataclass
class EquivalenceReport:
    kind: str
    init: tuple[float, float, float]
    own_time_end: float
    t_end: float
    max_rel_deviation: float
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


def transform_equivalence(params: ModelParams, init: State, kind: str = "blowup",
                          own_time: float = 2.0, config: IntegratorConfig | None = None,
                          n_samples: int = 200) -> EquivalenceReport:
    """Integrate a transformed system in its own time while accumulating the
    original time, map back, and compare with the original flow at matched
    times.  Returns the largest relative deviation over the common window."""
    cfg = config or IntegratorConfig(rtol=1e-11, atol=1e-14)
    cfg = IntegratorConfig(**{**cfg.__dict__, "dense_output": True, "t_eval": None, "engine": "python"})
    n = params.n
    if kind == "blowup":
        bs = to_blowup(init)
        z0 = bs.as_array()
        fld, clock, names = blowup_compiled(params), blowup_t_clock(), ("p1", "q1", "r1")
        back = lambda z: from_blowup(BlowupState(*z)).as_array()  # noqa: E731
    elif kind == "compact":
        z0 = to_compact(init, n).as_array()
        fld, clock, names = compact_compiled(params), compact_t_clock(), ("u", "v", "w")
        back = lambda z: from_compact(CompactState(*z), n).as_array()  # noqa: E731
    else:
        raise ValueError(f"unknown transform {kind!r}")
    transformed = integrate_augmented(fld, z0, (0.0, own_time), cfg, clock=clock, names=names, aux_name="t")
    t_end = float(transformed.aux[-1])
    original = integrate(original_field(params), init.as_array(), (0.0, t_end), cfg, names=("p", "q", "r"))
    s = np.linspace(0.0, own_time, n_samples)
    zs = transformed(s)
    ts = np.clip(transformed.aux_at(s), 0.0, t_end)
    mapped = np.array([back(z) for z in zs])
    ref = original(ts)
    dev = np.linalg.norm(mapped - ref, axis=1) / np.linalg.norm(ref, axis=1)
    return EquivalenceReport(kind, (init.p, init.q, init.r), own_time, t_end, float(dev.max()), n_samples)


# ---------------------------------------------------------------------------
# Bifurcation diagram

@dataclass
class SweepResult:
    k1: np.ndarray
    k2: np.ndarray
    grid: np.ndarray  # alpha_bar[i, j] at (k1[j], k2[i])
    curve_alpha1: np.ndarray  # rows (k1, k2)
    curve_alpha0: np.ndarray
    fixed: dict
    meta: dict = field(default_factory=dict)

    def grid_csv(self, dest=None) -> str:
        rows = [("k1", "k2", "alpha_bar")]
        for i, k2 in enumerate(self.k2):
            for j, k1 in enumerate(self.k1):
                rows.append((k1, k2, self.grid[i, j]))
        return _write_rows(rows, dest)

    def curve_csv(self, level: int, dest=None) -> str:
        curve = self.curve_alpha1 if level == 1 else self.curve_alpha0
        return _write_rows([("k1", "k2"), *map(tuple, curve)], dest)


def _write_rows(rows, dest):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([x if isinstance(x, str) else f"{float(x):.17g}" for x in row])
    text = buf.getvalue()
    if dest is not None:
        Path(dest).write_text(text, encoding="utf-8")
    return text


def level_curve(k1_values, level: float, k2_bracket: tuple[float, float], fixed: dict) -> np.ndarray:
    """Points ``(k1, k2)`` with ``alpha_bar = level`` by bisection in ``k2``.

    ``alpha_bar`` is strictly decreasing in ``k2`` so every column has at
    most one crossing; columns without a crossing inside the bracket are
    dropped.
    """
    n, km1, km = fixed["n"], fixed["kappa_m1"], fixed["kappa_m"]
    k1 = np.asarray(k1_values, dtype=float)
    lo = np.full_like(k1, k2_bracket[0])
    hi = np.full_like(k1, k2_bracket[1])
    g = lambda k2: alpha_bar_values(n, k1, k2, km1, km) - level  # noqa: E731
    ok = (g(lo) > 0) & (g(hi) < 0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        pos = g(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= 4 * np.spacing(np.maximum(hi, 1e-300))):
            break
    k2 = 0.5 * (lo + hi)
    return np.stack([k1[ok], k2[ok]], axis=1)


def bifurcation_sweep(k1_range=(0.0, 5.0), k2_range=(0.0, 5.0), fixed: dict | None = None,
                      resolution: int = 200) -> SweepResult:
    """``alpha_bar`` on a ``resolution x resolution`` grid over the half-open
    ranges ``(lo, hi]`` plus the ``alpha_bar = 1`` and ``alpha_bar = 0`` curves.

    ``fixed`` holds ``n, kappa_m1, kappa_m`` (``kappa3`` does not enter);
    ``n`` defaults to 5 and the default is flagged in ``meta``.
    """
    fixed = dict(fixed or {})
    meta = {"n_assumed": "n" not in fixed}
    fixed.setdefault("n", 5)
    fixed.setdefault("kappa_m1", 1.0)
    fixed.setdefault("kappa_m", 1.0)
    fixed.setdefault("kappa3", 1.0)
    validate_params({"kappa1": 1.0, "kappa2": 1.0, **fixed})
    if not (0 <= k1_range[0] < k1_range[1] and 0 <= k2_range[0] < k2_range[1]):
        raise ValueError("ranges must be nonnegative and increasing")
    step1 = (k1_range[1] - k1_range[0]) / resolution
    step2 = (k2_range[1] - k2_range[0]) / resolution
    k1 = k1_range[0] + step1 * np.arange(1, resolution + 1)
    k2 = k2_range[0] + step2 * np.arange(1, resolution + 1)
    K1, K2 = np.meshgrid(k1, k2)
    grid = alpha_bar_values(fixed["n"], K1, K2, fixed["kappa_m1"], fixed["kappa_m"])
    bracket = (k2_range[0], k2_range[1])
    meta["threshold_k2"] = fixed["kappa_m"] / (fixed["n"] - 2)
    return SweepResult(
        k1=k1, k2=k2, grid=grid,
        curve_alpha1=level_curve(k1, 1.0, bracket, fixed),
        curve_alpha0=level_curve(k1, 0.0, bracket, fixed),
        fixed=fixed, meta=meta,
    )
