"""Coordinate changes of the aggregate model.

Blow-up of the degenerate origin (q-chart)
    ``p = p1*q1, q = q1, r = r1*q1`` with the time ``T`` satisfying
    ``dT/dt = 1/r1``.  ``q1 = 0`` is the blown-up origin.

Compactification for unbounded growth
    ``u = p/sqrt(p+q), v = (2p + 2q - n r)/sqrt(p+q), w = 1/sqrt(p+q)`` with
    ``dtau/dt = 1/w``.  Growing solutions approach ``w = 0`` where the fast
    variable ``u`` relaxes to the reduced manifold ``u = U(v)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .errors import (
    ConditionViolated,
    NoRoot,
    NoSignChange,
    OutsideTriangle,
    SingularDenominator,
    ZeroMass,
    ZeroQ,
)
from .integrator import CompiledField
from .model import ModelParams, State, alpha_bar, growth_condition

__all__ = [
    "BlowupState",
    "CompactState",
    "BlowupRates",
    "CompactRates",
    "SlowConstants",
    "to_blowup",
    "from_blowup",
    "blowup_field",
    "manifold_field",
    "find_p1_star",
    "to_compact",
    "from_compact",
    "compact_field",
    "decay_coefficient",
    "reduced_manifold",
    "layer_u_field",
    "layer_v_field",
    "solve_v_star",
    "b_formula",
    "find_slow_constants",
    "slow_W",
    "blowup_compiled",
    "blowup_t_compiled",
    "blowup_t_clock",
    "blowup_T_clock",
    "compact_array",
    "compact_compiled",
    "compact_t_compiled",
    "compact_t_clock",
    "compact_tau_clock",
    "v_star_formula",
    "a_star_formula",
    "large_initial_state",
]

TRIANGLE_TOL = 1e-9


@dataclass(frozen=True)
class BlowupState:
    p1: float
    q1: float
    r1: float

    def as_array(self):
        return np.array([self.p1, self.q1, self.r1])


@dataclass(frozen=True)
class CompactState:
    u: float
    v: float
    w: float

    def as_array(self):
        return np.array([self.u, self.v, self.w])


class BlowupRates(NamedTuple):
    dp1: float
    dq1: float
    dr1: float


class CompactRates(NamedTuple):
    du: float
    dv: float
    dw: float


# ---------------------------------------------------------------------------
# Blow-up chart

def to_blowup(state: State) -> BlowupState:
    if state.q <= 0.0:
        raise ZeroQ(f"the q-chart needs q > 0, got q={state.q}")
    return BlowupState(state.p / state.q, state.q, state.r / state.q)


def from_blowup(bs: BlowupState) -> State:
    return State(bs.p1 * bs.q1, bs.q1, bs.r1 * bs.q1)


@njit(cache=True)
def _blowup_rates(p1, q1, r1, n, k1, k2, k3, km1, km):
    free1 = n * r1 - p1 - 2.0
    dq1 = q1 * r1 * (k2 * p1 - km) + k3 * p1 * r1 * q1 * q1 * free1
    dp1 = (r1 * (k1 - k3 * p1 * q1) * free1
           + km * (r1 - (n - 1.0) / (n - 2.0) * p1)
           - (k2 + km1) * p1 * r1
           - p1 * r1 * (k2 * p1 - km)
           - k3 * p1 * p1 * r1 * q1 * free1)
    dr1 = (1.0 - r1) * (k2 * p1 * r1 + km * (2.0 / (n - 2.0) - r1)) - k3 * p1 * r1 * r1 * q1 * free1
    return dp1, dq1, dr1


@njit(cache=True)
def _blowup_kernel(t, y, args, out):
    dp1, dq1, dr1 = _blowup_rates(y[0], y[1], y[2], args[0], args[1], args[2], args[3], args[4], args[5])
    out[0] = dp1
    out[1] = dq1
    out[2] = dr1


@njit(cache=True)
def _r1_clock_kernel(t, y, args, out):
    out[0] = y[2]


@njit(cache=True)
def _blowup_t_kernel(t, y, args, out):
    dp1, dq1, dr1 = _blowup_rates(y[0], y[1], y[2], args[0], args[1], args[2], args[3], args[4], args[5])
    r1 = y[2]
    out[0] = dp1 / r1
    out[1] = dq1 / r1
    out[2] = dr1 / r1


@njit(cache=True)
def _inv_r1_clock_kernel(t, y, args, out):
    out[0] = 1.0 / y[2]


def blowup_t_compiled(params: ModelParams) -> CompiledField:
    """System-T rewritten in the original time ``t`` (``dT/dt = 1/r1``)."""
    return CompiledField(_blowup_t_kernel, params.as_array(), 3)


def blowup_T_clock() -> CompiledField:
    """``dT/dt = 1/r1``."""
    return CompiledField(_inv_r1_clock_kernel, np.empty(0), 1)


def blowup_compiled(params: ModelParams) -> CompiledField:
    """System-T right-hand side on ``(p1, q1, r1)`` in the time ``T``."""
    return CompiledField(_blowup_kernel, params.as_array(), 3)


def blowup_t_clock() -> CompiledField:
    """``dt/dT = r1``: integrating it alongside system-T recovers ``t``."""
    return CompiledField(_r1_clock_kernel, np.empty(0), 1)


def _check_triangle(p1, q1, r1, n, tol=TRIANGLE_TOL):
    if r1 > 1.0 + tol or p1 < -tol or p1 > n * r1 - 2.0 + tol or q1 < -tol:
        raise OutsideTriangle(
            f"(p1, q1, r1)=({p1}, {q1}, {r1}) outside r1 <= 1, 0 <= p1 <= n r1 - 2, q1 >= 0"
        )


def blowup_field(bs: BlowupState, params: ModelParams) -> BlowupRates:
    """Derivatives of ``(p1, q1, r1)`` with respect to ``T``."""
    _check_triangle(bs.p1, bs.q1, bs.r1, params.n)
    return BlowupRates(*_blowup_rates(bs.p1, bs.q1, bs.r1, *params.as_array()))


def manifold_field(p1: float, r1: float, params: ModelParams) -> tuple[float, float]:
    """``(dp1/dT, dr1/dT)`` on the invariant plane ``q1 = 0``."""
    n = params.n
    _check_triangle(p1, 0.0, r1, n)
    k1, k2, km1, km = params.kappa1, params.kappa2, params.kappa_m1, params.kappa_m
    dp1 = (r1 * k1 * (n * r1 - p1 - 2.0) + km * (r1 - (n - 1) / (n - 2) * p1)
           - (k2 + km1) * p1 * r1 - p1 * r1 * (k2 * p1 - km))
    dr1 = (1.0 - r1) * (k2 * p1 * r1 + km * (2.0 / (n - 2) - r1))
    return dp1, dr1


def find_p1_star(params: ModelParams) -> float:
    """Stable steady state ``(p1*, 1)`` of the flow on ``q1 = 0``.

    Exists when ``alpha_bar < 1`` and ``kappa_m <= (n-2) kappa2``; the root
    lies in ``(kappa_m/kappa2, n-2)`` where ``dp1/dT`` goes from + to -.
    """
    n = params.n
    lo, hi = params.kappa_m / params.kappa2, n - 2.0
    if not alpha_bar(params) < 1.0 or not params.kappa_m <= (n - 2) * params.kappa2:
        raise NoSignChange("p1* needs alpha_bar < 1 and kappa_m <= (n-2) kappa2")
    g = lambda p1: manifold_field(p1, 1.0, params)[0]  # noqa: E731
    g_lo, g_hi = g(lo), g(hi)
    if not (g_lo > 0.0 > g_hi):
        raise NoSignChange(f"dp1/dT does not change sign on [{lo}, {hi}]: {g_lo}, {g_hi}")
    return brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


# ---------------------------------------------------------------------------
# Compactification

def to_compact(state: State, n: int) -> CompactState:
    mass = state.p + state.q
    if mass <= 0.0:
        raise ZeroMass(f"compact variables need p + q > 0, got {mass}")
    s = math.sqrt(mass)
    return CompactState(state.p / s, (2.0 * mass - n * state.r) / s, 1.0 / s)


def from_compact(cs: CompactState, n: int) -> State:
    if cs.w <= 0.0:
        raise ZeroMass(f"w = 0 has no preimage (w={cs.w})")
    w = cs.w
    return State(cs.u / w, 1.0 / w**2 - cs.u / w, (2.0 / w**2 - cs.v / w) / n)


def compact_array(y, n):
    """Vectorised :func:`to_compact` for an ``(N, 3)`` array of ``(p, q, r)``."""
    y = np.asarray(y, dtype=float)
    s = np.sqrt(y[..., 0] + y[..., 1])
    return np.stack([y[..., 0] / s, (2.0 * (y[..., 0] + y[..., 1]) - n * y[..., 2]) / s, 1.0 / s], axis=-1)


@njit(cache=True)
def _decay_coefficient(u, v, w, n, k1, km1, km):
    return 0.5 * (k1 * (u - v) - km1 * u - km * (1.0 - u * w) * n * (n - 1.0) * u / ((n - 2.0) * (2.0 - v * w)))


@njit(cache=True)
def _compact_rates(u, v, w, n, k1, k2, k3, km1, km):
    a = _decay_coefficient(u, v, w, n, k1, km1, km)
    den = (n - 2.0) * (2.0 - v * w)
    du = ((k1 * w - k3 * u) * (u - v)
          + km * (1.0 - u * w) * (1.0 - n * (n - 1.0) * u * w / den)
          - (k2 + km1) * u * w
          - u * w * w * a)
    dv = (w * (2.0 * k1 * (u - v) - (2.0 * km1 + n * k2) * u + km * (1.0 - u * w) * n * (2.0 * u - n * v) / den)
          - v * w * w * a)
    dw = -w * w * w * a
    return du, dv, dw


@njit(cache=True)
def _compact_kernel(t, y, args, out):
    du, dv, dw = _compact_rates(y[0], y[1], y[2], args[0], args[1], args[2], args[3], args[4], args[5])
    out[0] = du
    out[1] = dv
    out[2] = dw


@njit(cache=True)
def _compact_t_kernel(t, y, args, out):
    du, dv, dw = _compact_rates(y[0], y[1], y[2], args[0], args[1], args[2], args[3], args[4], args[5])
    w = y[2]
    out[0] = du / w
    out[1] = dv / w
    out[2] = dw / w


@njit(cache=True)
def _inv_w_clock_kernel(t, y, args, out):
    out[0] = 1.0 / y[2]


@njit(cache=True)
def _w_clock_kernel(t, y, args, out):
    out[0] = y[2]


def compact_compiled(params: ModelParams) -> CompiledField:
    """Compactified system on ``(u, v, w)`` in the time ``tau``."""
    return CompiledField(_compact_kernel, params.as_array(), 3)


def compact_t_compiled(params: ModelParams) -> CompiledField:
    """Compactified system on ``(u, v, w)`` in the original time ``t``."""
    return CompiledField(_compact_t_kernel, params.as_array(), 3)


def compact_tau_clock() -> CompiledField:
    """``dtau/dt = 1/w``."""
    return CompiledField(_inv_w_clock_kernel, np.empty(0), 1)


def compact_t_clock() -> CompiledField:
    """``dt/dtau = w``."""
    return CompiledField(_w_clock_kernel, np.empty(0), 1)


def decay_coefficient(u: float, v: float, w: float, params: ModelParams) -> float:
    """``A(u, v, w)`` in ``dw/dt = -w**2 A``."""
    if 2.0 - v * w <= 0.0:
        raise SingularDenominator(f"2 - v w = {2.0 - v * w} <= 0")
    return _decay_coefficient(u, v, w, float(params.n), params.kappa1, params.kappa_m1, params.kappa_m)


def compact_field(cs: CompactState, params: ModelParams) -> CompactRates:
    """Derivatives of ``(u, v, w)`` with respect to ``tau``."""
    if 2.0 - cs.v * cs.w <= 0.0:
        raise SingularDenominator(f"2 - v w = {2.0 - cs.v * cs.w} <= 0")
    return CompactRates(*_compact_rates(cs.u, cs.v, cs.w, *params.as_array()))


# ---------------------------------------------------------------------------
# Layer problems and slow constants

def reduced_manifold(v: float, params: ModelParams) -> float:
    """Positive root ``U(v)`` of ``kappa3 U (U - v) = kappa_m``.

    Written in the cancellation-free form for ``v < 0``.
    """
    c = params.kappa_m / params.kappa3
    root = math.sqrt(v * v + 4.0 * c)
    if v >= 0.0:
        return 0.5 * (v + root)
    return 2.0 * c / (root - v)


def layer_u_field(u: float, v_frozen: float, params: ModelParams) -> float:
    return -params.kappa3 * u * (u - v_frozen) + params.kappa_m


def layer_v_field(v: float, W_frozen: float, params: ModelParams) -> float:
    """Reduced ``v`` dynamics on ``u = U(v)`` in the slow time ``sigma``."""
    n = params.n
    k1, k2, km1, km = params.kappa1, params.kappa2, params.kappa_m1, params.kappa_m
    U = reduced_manifold(v, params)
    return W_frozen * (2.0 * k1 * (U - v) - (2.0 * km1 + n * k2) * U + km * n * (2.0 * U - n * v) / (2.0 * (n - 2)))


def solve_v_star(params: ModelParams) -> float:
    """Unique zero of :func:`layer_v_field` (the field is strictly decreasing).

    The bracket is grown geometrically from ``[-1, 1]``; bisection-type
    refinement is followed by Newton polishing.
    """
    g = lambda v: layer_v_field(v, 1.0, params)  # noqa: E731
    lo, hi = -1.0, 1.0
    for _ in range(200):
        if g(lo) > 0.0 > g(hi):
            break
        if g(lo) <= 0.0:
            lo *= 2.0
        if g(hi) >= 0.0:
            hi *= 2.0
    else:
        raise NoRoot("could not bracket the zero of the v-layer field")
    v = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(3):
        dv = 1e-7 * max(1.0, abs(v))
        slope = (g(v + dv) - g(v - dv)) / (2.0 * dv)
        if slope >= 0.0:
            break
        step = g(v) / slope
        if abs(step) > 1e-8 * max(1.0, abs(v)):
            break
        v_new = v - step
        if abs(g(v_new)) >= abs(g(v)):
            break
        v = v_new
    return v


def b_formula(params: ModelParams, variant: str) -> float:
    """Closed-form prefactor ``B`` of ``v* = B (k1 - k-1 - n k2/2 + n k-/(2(n-2)))``.

    ``variant="printed"`` uses the last term ``n^3/(2(n-2) k2 k-)``;
    ``variant="product"`` uses ``n^3 k2 k- /(2(n-2))``.
    """
    n = params.n
    k1, k2, k3, km1, km = (params.kappa1, params.kappa2, params.kappa3, params.kappa_m1, params.kappa_m)
    base = (n**3 / (4 * (n - 2)) * km**2 + 4 * k1 * km1 + 2 * n * k1 * k2
            + n * k1 * km + n**2 / (n - 2) * km1 * km)
    if variant == "printed":
        last = n**3 / (2 * (n - 2) * k2 * km)
    elif variant == "product":
        last = n**3 * k2 * km / (2 * (n - 2))
    else:
        raise ValueError(f"unknown B variant {variant!r}")
    return 2.0 * math.sqrt(km / k3) / math.sqrt(base + last)


def v_star_formula(params: ModelParams, variant: str) -> float:
    n = params.n
    lin = params.kappa1 - params.kappa_m1 - n / 2 * params.kappa2 + n / (2 * (n - 2)) * params.kappa_m
    return b_formula(params, variant) * lin


@dataclass(frozen=True)
class SlowConstants:
    u_star: float
    v_star: float
    B_formula: float
    B_consistent: bool
    B_variant: str
    A_star: float
    epsilon: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def find_slow_constants(params: ModelParams, epsilon: float, rel_tol: float = 1e-9) -> SlowConstants:
    """Slow-manifold constants of the growing regime.

    ``v*`` comes from the root finder; the closed-form ``v*`` is evaluated
    under both readings of ``B`` and the reading that reproduces the numeric
    root (relative ``rel_tol``) is reported.  ``B_consistent`` is False if
    neither does.
    """
    if not growth_condition(params):
        raise ConditionViolated("slow constants need alpha_bar < 0 (growth condition fails)")
    if not epsilon > 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    v_star = solve_v_star(params)
    u_star = reduced_manifold(v_star, params)
    A_star = decay_coefficient(u_star, v_star, 0.0, params)
    variant, consistent = "printed", False
    for name in ("printed", "product"):
        vf = v_star_formula(params, name)
        if abs(vf - v_star) <= rel_tol * max(1.0, abs(v_star)):
            variant, consistent = name, True
            break
    return SlowConstants(
        u_star=u_star,
        v_star=v_star,
        B_formula=b_formula(params, variant),
        B_consistent=consistent,
        B_variant=variant,
        A_star=A_star,
        epsilon=float(epsilon),
    )


def a_star_formula(params: ModelParams, variant: str = "product") -> float:
    """Closed form of ``A* = A(U(v*), v*, 0)`` in terms of ``B``."""
    n = params.n
    k1, k2, km1, km = params.kappa1, params.kappa2, params.kappa_m1, params.kappa_m
    bracket = 4 * (n - 2) ** 2 * k1 * k2 - 2 * n * (n - 2) * km * (k1 + km1) - n**2 * (n - 1) * km**2
    return n * b_formula(params, variant) / (16 * (n - 2) ** 2) * bracket


def slow_W(sigma, A_star: float, epsilon: float):
    """Solution ``(1 + 2 A* eps sigma)^(-1/2)`` of ``dW/dsigma = -eps A* W^3, W(0) = 1``."""
    return (1.0 + 2.0 * A_star * epsilon * np.asarray(sigma, dtype=float)) ** -0.5


def large_initial_state(c1: float, c2: float, delta: float, n: int) -> State:
    """Large initial data ``(c1/d, 1/d^2, 2/(n d^2) + c2/(n d))`` of the growth result."""
    return State(c1 / delta, 1.0 / delta**2, 2.0 / (n * delta**2) + c2 / (n * delta))
