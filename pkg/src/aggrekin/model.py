"""Cross-linked aggregate model: parameters, admissible states, vector field,
nontrivial equilibrium and regime classification.

State variables are ``p`` (one-hand bound cross-linkers), ``q`` (cross-links
bound with both hands) and ``r`` (oligomers), all continuous.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np
from numba import njit

from .errors import (
    InadmissibleState,
    NonPositiveRate,
    NoPositiveEquilibrium,
    OligomerTooSmall,
    ValidationError,
    ZeroDenominator,
)

__all__ = [
    "ModelParams",
    "State",
    "Regime",
    "RegimeTag",
    "Equilibrium",
    "Rates",
    "validate_params",
    "load_params",
    "alpha",
    "vector_field",
    "alpha_bar",
    "alpha_bar_values",
    "classify",
    "equilibrium",
    "stable_aggregate_condition",
    "growth_condition",
    "TOL_BOUNDARY",
]

TOL_BOUNDARY = 1e-12
RATE_KEYS = ("kappa1", "kappa2", "kappa3", "kappa_m1", "kappa_m")


@dataclass(frozen=True)
class ModelParams:
    """Oligomer size ``n`` and the rate constants.

    ``kappa_m1`` is the unbinding rate of one-hand bound cross-linkers and
    ``kappa_m`` the common rate of cross-link breaking.  ``kappa1`` and
    ``kappa2`` absorb the (constant) free cross-linker and free oligomer
    concentrations.
    """

    n: int
    kappa1: float
    kappa2: float
    kappa3: float
    kappa_m1: float
    kappa_m: float

    def as_array(self) -> np.ndarray:
        """Packed ``[n, k1, k2, k3, k-1, k-]`` used by the compiled kernels."""
        return np.array(
            [self.n, self.kappa1, self.kappa2, self.kappa3, self.kappa_m1, self.kappa_m],
            dtype=np.float64,
        )

    def replace(self, **changes) -> "ModelParams":
        return validate_params({**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


def validate_params(raw: Mapping) -> ModelParams:
    """Build :class:`ModelParams` from a mapping, enforcing ``n >= 3`` and
    strictly positive rates."""
    missing = [k for k in ("n",) + RATE_KEYS if k not in raw]
    if missing:
        raise ValidationError(f"missing parameter(s): {', '.join(missing)}")
    n_raw = raw["n"]
    if isinstance(n_raw, bool) or not float(n_raw).is_integer():
        raise ValidationError(f"n: oligomer size must be an integer, got {n_raw!r}")
    n = int(n_raw)
    if n < 3:
        raise OligomerTooSmall(f"n: oligomer size must be >= 3, got {n}")
    rates = {}
    for key in RATE_KEYS:
        try:
            value = float(raw[key])
        except (TypeError, ValueError):
            raise ValidationError(f"{key}: not a number: {raw[key]!r}") from None
        if not math.isfinite(value) or value <= 0.0:
            raise NonPositiveRate(f"{key}: rate constants must be finite and > 0, got {value}")
        rates[key] = value
    return ModelParams(n=n, **rates)


def load_params(path) -> ModelParams:
    """Read a JSON parameter file with keys ``n, kappa1, kappa2, kappa3,
    kappa_m1, kappa_m``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return validate_params(raw)


@dataclass(frozen=True)
class State:
    p: float
    q: float
    r: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.q, self.r], dtype=np.float64)

    @classmethod
    def from_array(cls, y) -> "State":
        return cls(float(y[0]), float(y[1]), float(y[2]))

    def constraint_tol(self, n: int) -> float:
        return 1e-9 * max(1.0, n * self.r)

    def violations(self, n: int) -> list[str]:
        """Names of the admissibility inequalities violated beyond tolerance."""
        tol = self.constraint_tol(n)
        out = []
        if min(self.p, self.q, self.r) < -tol:
            out.append("nonnegativity")
        if n * self.r - self.p - 2.0 * self.q < -tol:
            out.append("free binding sites nr - p - 2q >= 0")
        if self.q - self.r < -tol:
            out.append("connectivity q >= r")
        return out

    def is_admissible(self, n: int) -> bool:
        return not self.violations(n)


class RegimeTag(str, Enum):
    DISSOLUTION = "Dissolution"
    STABLE_AGGREGATE = "StableAggregate"
    POLY_GROWTH = "PolyGrowth"
    BOUNDARY_ZERO = "BoundaryZero"
    BOUNDARY_ONE = "BoundaryOne"


@dataclass(frozen=True)
class Regime:
    tag: RegimeTag
    alpha_bar: float


@dataclass(frozen=True)
class Equilibrium:
    p_bar: float
    q_bar: float
    r_bar: float
    A: float

    @property
    def state(self) -> State:
        return State(self.p_bar, self.q_bar, self.r_bar)


class Rates(NamedTuple):
    dp: float
    dq: float
    dr: float


@njit(cache=True)
def _rates(p, q, r, n, k1, k2, k3, km1, km):
    free = n * r - p - 2.0 * q
    split = (n * r - 2.0 * q) / ((n - 2.0) * r)
    dp = (k1 - k3 * p) * free + km * q * (1.0 - (n - 1.0) * p / ((n - 2.0) * r)) - (k2 + km1) * p
    dq = k2 * p + k3 * p * free - km * q
    dr = k2 * p - km * q * split
    return dp, dq, dr


@njit(cache=True)
def rhs_kernel(t, y, args, out):
    """Compiled right-hand side ``(t, y, args, out)`` of the original system."""
    dp, dq, dr = _rates(y[0], y[1], y[2], args[0], args[1], args[2], args[3], args[4], args[5])
    out[0] = dp
    out[1] = dq
    out[2] = dr


def alpha(q: float, r: float, params: ModelParams) -> float:
    """Fraction of cross-link breaking events that release an oligomer."""
    if r <= 0.0:
        raise ZeroDenominator(f"alpha(q, r) needs r > 0, got r={r}")
    n = params.n
    return (n * r - 2.0 * q) / ((n - 2) * r)


def vector_field(state: State, params: ModelParams, check: bool = True) -> Rates:
    """Time derivatives ``(dp/dt, dq/dt, dr/dt)``.

    At ``r = 0`` only the zero state is admissible and its rates are zero;
    any other state with ``r = 0`` is rejected.
    """
    if check:
        bad = state.violations(params.n)
        if bad:
            raise InadmissibleState(f"state {state} violates: {'; '.join(bad)}")
    if state.r == 0.0:
        if state.p == 0.0 and state.q == 0.0:
            return Rates(0.0, 0.0, 0.0)
        raise InadmissibleState(f"r = 0 is only admissible for the zero state, got {state}")
    if state.r < 0.0:
        raise InadmissibleState(f"r must be positive, got {state.r}")
    return Rates(*_rates(state.p, state.q, state.r, *params.as_array()))


def alpha_bar_values(n, kappa1, kappa2, kappa_m1, kappa_m):
    """Array form of :func:`alpha_bar` (broadcasts over rate arrays).

    The root difference is rationalised so that large ``kappa1`` does not
    lose the digits that decide the regime.
    """
    k1 = np.asarray(kappa1, dtype=float)
    k2 = np.asarray(kappa2, dtype=float)
    s = k1 + kappa_m1
    root = np.sqrt(s * s + 4.0 * k1 * k2 * (n - 1))
    return n / (n - 2) - 4.0 * k1 * k2 / (kappa_m * (s + root))


def alpha_bar(params: ModelParams) -> float:
    """Equilibrium value of ``alpha``; does not depend on ``kappa3``."""
    n = params.n
    k1, k2, km1, km = params.kappa1, params.kappa2, params.kappa_m1, params.kappa_m
    s = k1 + km1
    root = math.sqrt(s * s + 4.0 * k1 * k2 * (n - 1))
    return n / (n - 2) - 4.0 * k1 * k2 / (km * (s + root))


def classify(params: ModelParams, tol: float = TOL_BOUNDARY) -> Regime:
    ab = alpha_bar(params)
    if abs(ab - 1.0) <= tol:
        tag = RegimeTag.BOUNDARY_ONE
    elif abs(ab) <= tol:
        tag = RegimeTag.BOUNDARY_ZERO
    elif ab > 1.0:
        tag = RegimeTag.DISSOLUTION
    elif ab > 0.0:
        tag = RegimeTag.STABLE_AGGREGATE
    else:
        tag = RegimeTag.POLY_GROWTH
    return Regime(tag, ab)


def stable_aggregate_condition(params: ModelParams) -> bool:
    """Polynomial form of ``alpha_bar < 1``."""
    n = params.n
    k1, k2, km1, km = params.kappa1, params.kappa2, params.kappa_m1, params.kappa_m
    return k1 * k2 * (n - 2) ** 2 > km * (k1 + km1) * (n - 2) + km**2 * (n - 1)


def growth_condition(params: ModelParams) -> bool:
    """Polynomial form of ``alpha_bar < 0``."""
    n = params.n
    k1, k2, km1, km = params.kappa1, params.kappa2, params.kappa_m1, params.kappa_m
    return 4.0 * k1 * k2 * (n - 2) ** 2 > n * km * (2.0 * (k1 + km1) * (n - 2) + km * n * (n - 1))


def equilibrium(params: ModelParams) -> Equilibrium:
    """Closed-form nontrivial equilibrium, defined for ``0 < alpha_bar < 1``."""
    ab = alpha_bar(params)
    if not 0.0 < ab < 1.0:
        raise NoPositiveEquilibrium(
            f"the nontrivial equilibrium requires 0 < alpha_bar < 1, got {ab:.6g}"
        )
    n = params.n
    k1, k2, k3, km1, km = (
        params.kappa1, params.kappa2, params.kappa3, params.kappa_m1, params.kappa_m,
    )
    A = 2.0 * k1 * k2**2 * (n - 2) / (
        k3 * km * (km * (n - 1) * (n - (n - 2) * ab) + 2.0 * km1 * (n - 2))
    )
    g = (1.0 - ab) / ab**2
    return Equilibrium(
        p_bar=km * A / k2 * (1.0 - ab) / ab,
        q_bar=A * g,
        r_bar=2.0 * A / (n - (n - 2) * ab) * g,
        A=A,
    )
