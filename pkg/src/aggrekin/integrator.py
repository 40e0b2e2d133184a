"""Adaptive explicit Runge-Kutta integration.

Dormand-Prince 5(4) pair with local extrapolation, proportional-integral step
size control, the pair's quartic dense output and sign-change event location
by bisection on the dense output.

Two engines share the tableau and the controller:

* a Python loop that accepts any callable ``f(t, y)`` and supports events
  and dense output;
* a numba-compiled loop for :class:`CompiledField` right-hand sides, used for
  the long runs (the growing regime needs millions of steps because the fast
  relaxation of ``p`` bounds the explicit step size).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .errors import ClockNotPositive, NonFiniteState, StepLimit, StepSizeTooSmall

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "Status",
    "Event",
    "CompiledField",
    "DenseOutput",
    "integrate",
    "integrate_augmented",
]

# Dormand-Prince 5(4) tableau.
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# Quartic continuous extension: y(t + s*h) = y + h * K.T @ P @ [s, s^2, s^3, s^4].
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

# PI controller (Hairer, Norsett & Wanner, DOPRI5 defaults).
BETA = 0.04
EXPO1 = 0.2 - 0.75 * BETA
SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0
MAX_NONFINITE_RETRIES = 40

_STATUS_OK, _STATUS_STEPS, _STATUS_NONFINITE, _STATUS_GROWTH, _STATUS_TINY = range(5)


class Status(str, Enum):
    REACHED_T_END = "ReachedTEnd"
    EVENT_STOP = "EventStop"
    STEP_LIMIT = "StepLimit"


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float = math.inf
    max_steps: int = 10_000_000
    dense_output: bool = False
    t_eval: Sequence[float] | None = None
    first_step: float | None = None
    growth_limit: float = 1e30
    engine: str = "auto"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.engine not in ("auto", "python", "compiled"):
            raise ValueError(f"unknown engine {self.engine!r}")


@dataclass(frozen=True)
class CompiledField:
    """Right-hand side backed by a numba kernel ``kernel(t, y, args, out)``.

    Calling the object evaluates the kernel from Python, so it can be passed
    anywhere a plain ``f(t, y)`` is expected.
    """

    kernel: Callable
    args: np.ndarray
    dim: int

    def __call__(self, t, y):
        out = np.empty(self.dim)
        self.kernel(float(t), np.ascontiguousarray(y, dtype=np.float64), self.args, out)
        return out


@dataclass(frozen=True)
class Event:
    """Sign-change event ``fn(t, y)``.

    ``direction`` restricts detection to increasing (+1) or decreasing (-1)
    crossings; ``terminal`` stops the integration at the first crossing.
    """

    fn: Callable[[float, np.ndarray], float]
    name: str = "event"
    terminal: bool = False
    direction: int = 0


class DenseOutput:
    """Piecewise quartic interpolant over the accepted steps."""

    def __init__(self, t_nodes, y_nodes, q_coeffs):
        self.t_nodes = np.asarray(t_nodes)
        self.y_nodes = np.asarray(y_nodes)
        self.q_coeffs = np.asarray(q_coeffs)
        self._ascending = self.t_nodes[-1] >= self.t_nodes[0]

    @property
    def t_min(self):
        return min(self.t_nodes[0], self.t_nodes[-1])

    @property
    def t_max(self):
        return max(self.t_nodes[0], self.t_nodes[-1])

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        keys = self.t_nodes if self._ascending else -self.t_nodes[::-1]
        tk = t_arr if self._ascending else -t_arr
        idx = np.searchsorted(keys, tk, side="right") - 1
        idx = np.clip(idx, 0, len(self.t_nodes) - 2)
        if not self._ascending:
            idx = len(self.t_nodes) - 2 - idx
        t_lo = self.t_nodes[idx]
        h = self.t_nodes[idx + 1] - t_lo
        s = (t_arr - t_lo) / h
        powers = np.stack([s, s**2, s**3, s**4], axis=-1)
        y = self.y_nodes[idx] + h[:, None] * np.einsum("kdj,kj->kd", self.q_coeffs[idx], powers)
        return y[0] if np.ndim(t) == 0 else y


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    status: Status
    names: tuple[str, ...]
    events: list[tuple[float, str]] = field(default_factory=list)
    aux: np.ndarray | None = None
    aux_name: str | None = None
    dense: DenseOutput | None = None
    nsteps: int = 0
    nfev: int = 0

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def component(self, name: str) -> np.ndarray:
        if name == self.aux_name:
            return self.aux
        return self.states[:, self.names.index(name)]

    def __call__(self, t):
        """Dense evaluation of the state part (requires ``dense_output``)."""
        if self.dense is None:
            raise ValueError("trajectory was integrated without dense output")
        y = self.dense(t)
        return y[..., : len(self.names)]

    def aux_at(self, t):
        if self.dense is None or self.aux is None:
            raise ValueError("no dense auxiliary time available")
        return self.dense(t)[..., len(self.names)]

    def columns(self) -> tuple[list[str], np.ndarray]:
        header = ["t", *self.names]
        cols = [self.times[:, None], self.states]
        if self.aux is not None:
            header.append(self.aux_name)
            cols.append(self.aux[:, None])
        return header, np.hstack(cols)

    def to_csv(self, dest=None) -> str:
        """Write ``t,<names>`` rows with 17 significant digits; returns the text."""
        header, table = self.columns()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in table:
            writer.writerow([f"{x:.17g}" for x in row])
        text = buf.getvalue()
        if dest is not None:
            Path(dest).write_text(text, encoding="utf-8")
        return text


# ---------------------------------------------------------------------------
# Shared helpers

def _error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, direction, rtol, atol, max_step):
    """Starting step from the local Lipschitz estimate (Hairer's HINIT)."""
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    y1 = y0 + direction * h0 * f0
    f1 = np.asarray(f(t0 + direction * h0, y1), dtype=float)
    if not np.all(np.isfinite(f1)):
        return h0 * 1e-3
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, max_step)


def _controller(err, facold, rejected_last):
    """New step factor and whether the step is accepted."""
    if err <= 1.0:
        fac11 = max(err, 1e-16) ** EXPO1
        fac = fac11 / max(facold, 1e-4) ** BETA
        fac = min(1.0 / FAC_MIN, max(1.0 / FAC_MAX, fac / SAFETY))
        factor = 1.0 / fac
        if rejected_last:
            factor = min(factor, 1.0)
        return True, factor
    fac11 = err**EXPO1
    return False, 1.0 / min(1.0 / FAC_MIN, fac11 / SAFETY)


# ---------------------------------------------------------------------------
# Python engine

def _py_step(f, t, y, f0, h, direction):
    """One trial step; returns ``(y_new, K, nfev)`` with ``K`` of shape (7, dim)."""
    K = np.empty((7, y.size))
    K[0] = f0
    hs = direction * h
    for s in range(1, 6):
        K[s] = f(t + C[s] * hs, y + hs * (A[s, :s] @ K[:s]))
    y_new = y + hs * (B[:6] @ K[:6])
    K[6] = f(t + hs, y_new)
    return y_new, K


def _locate_event(ev, t_lo, g_lo, t_hi, dense_step):
    tol = 1e-12 * max(1.0, abs(t_lo), abs(t_hi))
    a, b, ga = t_lo, t_hi, g_lo
    while abs(b - a) > tol:
        m = 0.5 * (a + b)
        gm = ev.fn(m, dense_step(m))
        if gm == 0.0:
            return m
        if (ga < 0) == (gm < 0):
            a, ga = m, gm
        else:
            b = m
    return 0.5 * (a + b)


def _crossed(ev, g_old, g_new):
    if g_old == 0.0 or np.sign(g_old) == np.sign(g_new):
        return False
    if ev.direction > 0:
        return g_old < 0.0
    if ev.direction < 0:
        return g_old > 0.0
    return True


def _run_python(f, y0, t0, t1, cfg, events, names, nonfinite_hook=None):
    direction = 1.0 if t1 > t0 else -1.0
    f_eval = lambda t, y: np.asarray(f(t, y), dtype=float)  # noqa: E731
    t, y = float(t0), y0.copy()
    f0 = f_eval(t, y)
    nfev = 1
    if not np.all(np.isfinite(f0)):
        if nonfinite_hook:
            nonfinite_hook(y, f0)
        raise NonFiniteState(f"non-finite derivative at t={t}: {f0}")
    h = cfg.first_step or _initial_step(f_eval, t, y, f0, direction, cfg.rtol, cfg.atol, cfg.max_step)
    nfev += 1

    t_eval = None if cfg.t_eval is None else np.asarray(cfg.t_eval, dtype=float)
    if t_eval is not None:
        t_eval = t_eval[np.argsort(direction * t_eval)]
        t_eval = t_eval[(direction * (t_eval - t0) >= 0) & (direction * (t1 - t_eval) >= 0)]
    eval_pos = 0
    rec_t: list[float] = []
    rec_y: list[np.ndarray] = []

    def record_evals_upto(t_hi, dense_step, inclusive=True):
        nonlocal eval_pos
        while eval_pos < len(t_eval):
            te = t_eval[eval_pos]
            beyond = direction * (te - t_hi)
            if beyond > 0 or (beyond == 0 and not inclusive):
                break
            rec_t.append(te)
            rec_y.append(dense_step(te))
            eval_pos += 1

    if t_eval is None:
        rec_t.append(t)
        rec_y.append(y.copy())
    else:
        record_evals_upto(t, lambda s: y.copy())

    dense_t, dense_y, dense_q = ([t], [y.copy()], []) if cfg.dense_output else (None, None, None)
    ev_rows: list[tuple[float, np.ndarray]] = []
    ev_log: list[tuple[float, str]] = []
    g_old = [ev.fn(t, y) for ev in events]
    facold = 1e-4
    rejected_last = False
    nonfinite_retries = 0
    nsteps = 0
    status = Status.REACHED_T_END

    def build(status):
        times = np.array(rec_t)
        states = np.array(rec_y).reshape(len(rec_t), -1)
        if ev_rows:
            times = np.concatenate([times, [r[0] for r in ev_rows]])
            states = np.vstack([states, np.array([r[1] for r in ev_rows])])
            order = np.argsort(direction * times, kind="stable")
            times, states = times[order], states[order]
            keep = np.concatenate([[True], np.diff(direction * times) > 0])
            times, states = times[keep], states[keep]
        dense = None
        if cfg.dense_output and dense_q:
            dense = DenseOutput(dense_t, dense_y, dense_q)
        return Trajectory(times, states, status, names, list(ev_log), dense=dense,
                          nsteps=nsteps, nfev=nfev)

    while direction * (t1 - t) > 0:
        if nsteps >= cfg.max_steps:
            traj = build(Status.STEP_LIMIT)
            raise StepLimit(f"max_steps={cfg.max_steps} exceeded at t={t}", traj)
        h = min(h, cfg.max_step)
        if h <= 10.0 * np.spacing(abs(t)):
            raise StepSizeTooSmall(f"step size underflow at t={t}", build(Status.STEP_LIMIT))
        last = False
        if direction * (t + direction * h - t1) >= 0:
            h = abs(t1 - t)
            last = True
        y_new, K = _py_step(f_eval, t, y, f0, h, direction)
        nfev += 6
        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(y_new))):
            nonfinite_retries += 1
            if nonfinite_retries > MAX_NONFINITE_RETRIES:
                if nonfinite_hook:
                    bad = next(k for k in K if not np.all(np.isfinite(k)))
                    nonfinite_hook(y, bad)
                raise NonFiniteState(f"non-finite field values near t={t}", build(Status.STEP_LIMIT))
            h *= 0.25
            rejected_last = True
            continue
        nonfinite_retries = 0
        err = _error_norm(direction * h * (E @ K), y, y_new, cfg.rtol, cfg.atol)
        accepted, factor = _controller(err, facold, rejected_last)
        if not accepted:
            h *= factor
            rejected_last = True
            continue

        nsteps += 1
        t_new = t1 if last else t + direction * h
        hs = t_new - t
        Q = K.T @ P
        t_old, y_old = t, y

        def dense_step(s, t_old=t_old, y_old=y_old, hs=hs, Q=Q):
            x = (s - t_old) / hs
            return y_old + hs * (Q @ np.array([x, x * x, x**3, x**4]))

        if np.max(np.abs(y_new)) > cfg.growth_limit:
            raise NonFiniteState(
                f"state exceeded growth limit {cfg.growth_limit:g} at t={t_new}", build(Status.STEP_LIMIT)
            )

        stop_at = None
        if events:
            g_new = [ev.fn(t_new, y_new) for ev in events]
            hits = []
            for i, ev in enumerate(events):
                if _crossed(ev, g_old[i], g_new[i]):
                    hits.append((_locate_event(ev, t_old, g_old[i], t_new, dense_step), i))
                elif g_new[i] == 0.0 and g_old[i] != 0.0:
                    hits.append((t_new, i))
            hits.sort(key=lambda h_: direction * h_[0])
            for te, i in hits:
                ye = dense_step(te)
                ev_log.append((te, events[i].name))
                ev_rows.append((te, ye))
                if events[i].terminal:
                    stop_at = (te, ye)
                    break
            g_old = g_new

        if cfg.dense_output:
            dense_t.append(t_new)
            dense_y.append(y_new.copy())
            dense_q.append(Q)

        if stop_at is not None:
            te, ye = stop_at
            if t_eval is not None:
                record_evals_upto(te, dense_step)
            status = Status.EVENT_STOP
            if cfg.dense_output:
                dense_t[-1] = t_new  # interpolant stays valid on the full step
            t, y = te, ye
            break

        if t_eval is None:
            rec_t.append(t_new)
            rec_y.append(y_new.copy())
        else:
            record_evals_upto(t_new, dense_step)
        t, y, f0 = t_new, y_new, K[6]
        facold = max(err, 1e-4)
        rejected_last = False
        h *= factor

    return build(status)


# ---------------------------------------------------------------------------
# Compiled engine

@njit(cache=True)
def _compiled_loop(kernel, args, t0, y0, t1, h0, rtol, atol, max_step, max_steps, t_eval, growth_limit):
    dim = y0.size
    direction = 1.0 if t1 > t0 else -1.0
    K = np.empty((7, dim))
    y = y0.copy()
    y_new = np.empty(dim)
    ytmp = np.empty(dim)
    t = t0
    kernel(t, y, args, K[0])
    nfev = 1
    record_all = t_eval.size == 0
    cap = 1024 if record_all else t_eval.size
    ts = np.empty(cap)
    ys = np.empty((cap, dim))
    n_rec = 0
    ev_pos = 0
    if record_all:
        ts[0] = t
        ys[0] = y
        n_rec = 1
    else:
        while ev_pos < t_eval.size and direction * (t_eval[ev_pos] - t) <= 0.0:
            ts[n_rec] = t_eval[ev_pos]
            ys[n_rec] = y
            n_rec += 1
            ev_pos += 1
    for i in range(dim):
        if not np.isfinite(K[0, i]):
            return ts[:n_rec], ys[:n_rec], 2, 0, nfev, t, y, i
    h = h0
    facold = 1e-4
    rejected_last = False
    retries = 0
    nsteps = 0
    while direction * (t1 - t) > 0.0:
        if nsteps >= max_steps:
            return ts[:n_rec], ys[:n_rec], 1, nsteps, nfev, t, y, -1
        if h > max_step:
            h = max_step
        if h <= 10.0 * np.spacing(abs(t)):
            return ts[:n_rec], ys[:n_rec], 4, nsteps, nfev, t, y, -1
        last = False
        if direction * (t + direction * h - t1) >= 0.0:
            h = abs(t1 - t)
            last = True
        hs = direction * h
        for s in range(1, 6):
            for i in range(dim):
                acc = 0.0
                for j in range(s):
                    acc += A[s, j] * K[j, i]
                ytmp[i] = y[i] + hs * acc
            kernel(t + C[s] * hs, ytmp, args, K[s])
        for i in range(dim):
            acc = 0.0
            for j in range(6):
                acc += B[j] * K[j, i]
            y_new[i] = y[i] + hs * acc
        kernel(t + hs, y_new, args, K[6])
        nfev += 6
        bad = -1
        for s in range(7):
            for i in range(dim):
                if not np.isfinite(K[s, i]):
                    bad = i
        if bad >= 0:
            retries += 1
            if retries > 40:
                return ts[:n_rec], ys[:n_rec], 2, nsteps, nfev, t, y, bad
            h *= 0.25
            rejected_last = True
            continue
        retries = 0
        acc2 = 0.0
        for i in range(dim):
            e = 0.0
            for j in range(7):
                e += E[j] * K[j, i]
            sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            acc2 += (hs * e / sc) ** 2
        err = np.sqrt(acc2 / dim)
        if err > 1.0:
            h /= min(1.0 / FAC_MIN, err**EXPO1 / SAFETY)
            rejected_last = True
            continue
        fac11 = max(err, 1e-16) ** EXPO1
        fac = fac11 / max(facold, 1e-4) ** BETA
        fac = min(1.0 / FAC_MIN, max(1.0 / FAC_MAX, fac / SAFETY))
        factor = 1.0 / fac
        if rejected_last and factor > 1.0:
            factor = 1.0
        nsteps += 1
        t_new = t1 if last else t + hs
        hstep = t_new - t
        if record_all:
            if n_rec == cap:
                cap *= 2
                ts2 = np.empty(cap)
                ys2 = np.empty((cap, dim))
                ts2[:n_rec] = ts[:n_rec]
                ys2[:n_rec] = ys[:n_rec]
                ts = ts2
                ys = ys2
            ts[n_rec] = t_new
            ys[n_rec] = y_new
            n_rec += 1
        else:
            while ev_pos < t_eval.size and direction * (t_eval[ev_pos] - t_new) <= 0.0:
                x = (t_eval[ev_pos] - t) / hstep
                for i in range(dim):
                    acc = 0.0
                    for j in range(7):
                        acc += K[j, i] * (P[j, 0] * x + P[j, 1] * x * x
                                          + P[j, 2] * x * x * x + P[j, 3] * x * x * x * x)
                    ys[n_rec, i] = y[i] + hstep * acc
                ts[n_rec] = t_eval[ev_pos]
                n_rec += 1
                ev_pos += 1
        big = 0.0
        for i in range(dim):
            big = max(big, abs(y_new[i]))
        t = t_new
        y[:] = y_new
        K[0] = K[6]
        if big > growth_limit:
            return ts[:n_rec], ys[:n_rec], 3, nsteps, nfev, t, y, -1
        facold = max(err, 1e-4)
        rejected_last = False
        h *= factor
    return ts[:n_rec], ys[:n_rec], 0, nsteps, nfev, t, y, -1


def _run_compiled(fld: CompiledField, y0, t0, t1, cfg, names, clock_index=None):
    direction = 1.0 if t1 > t0 else -1.0
    f0 = fld(t0, y0)
    if not np.all(np.isfinite(f0)):
        _raise_nonfinite(np.flatnonzero(~np.isfinite(f0))[0], clock_index, t0, None)
    h0 = cfg.first_step or _initial_step(fld, t0, y0, f0, direction, cfg.rtol, cfg.atol, cfg.max_step)
    t_eval = np.empty(0) if cfg.t_eval is None else np.asarray(cfg.t_eval, dtype=float)
    if t_eval.size:
        t_eval = t_eval[np.argsort(direction * t_eval)]
        t_eval = t_eval[(direction * (t_eval - t0) >= 0) & (direction * (t1 - t_eval) >= 0)]
        if t_eval.size == 0:
            t_eval = np.array([t0])
    max_step = cfg.max_step if math.isfinite(cfg.max_step) else 1e300
    ts, ys, code, nsteps, nfev, t_last, y_last, bad = _compiled_loop(
        fld.kernel, fld.args, float(t0), np.ascontiguousarray(y0, dtype=np.float64), float(t1),
        float(h0), cfg.rtol, cfg.atol, max_step, int(cfg.max_steps), t_eval, cfg.growth_limit,
    )
    status = Status.REACHED_T_END if code == _STATUS_OK else Status.STEP_LIMIT
    traj = Trajectory(ts.copy(), ys.copy(), status, names, nsteps=int(nsteps), nfev=int(nfev))
    if code == _STATUS_STEPS:
        raise StepLimit(f"max_steps={cfg.max_steps} exceeded at t={t_last}", traj)
    if code == _STATUS_TINY:
        raise StepSizeTooSmall(f"step size underflow at t={t_last}", traj)
    if code == _STATUS_GROWTH:
        raise NonFiniteState(f"state exceeded growth limit {cfg.growth_limit:g} at t={t_last}", traj)
    if code == _STATUS_NONFINITE:
        _raise_nonfinite(bad, clock_index, t_last, traj)
    return traj


def _raise_nonfinite(index, clock_index, t, traj):
    if clock_index is not None and index == clock_index:
        raise ClockNotPositive(f"clock rate not positive near t={t}")
    raise NonFiniteState(f"non-finite derivative in component {index} near t={t}", traj)


# ---------------------------------------------------------------------------
# Public entry points

def _default_names(dim):
    return tuple(f"y{i}" for i in range(dim))


def _use_compiled(fld, cfg, events):
    possible = isinstance(fld, CompiledField) and not events and not cfg.dense_output
    if cfg.engine == "compiled" and not possible:
        raise ValueError("compiled engine needs a CompiledField, no events and no dense output")
    return possible and cfg.engine != "python"


def integrate(field, y0, t_span, config: IntegratorConfig | None = None,
              events: Sequence[Event] = (), names: Sequence[str] | None = None) -> Trajectory:
    """Integrate ``y' = field(t, y)`` over ``t_span = (t0, t1)``.

    Records every accepted step (plus event rows) unless ``config.t_eval``
    is given, in which case only those times are recorded.  Integration
    backwards in time (``t1 < t0``) is allowed.
    """
    cfg = config or IntegratorConfig()
    t0, t1 = map(float, t_span)
    if t0 == t1:
        raise ValueError("empty time span")
    y0 = np.array(y0, dtype=float).ravel()
    names = tuple(names) if names is not None else _default_names(y0.size)
    if _use_compiled(field, cfg, events):
        return _run_compiled(field, y0, t0, t1, cfg, names)
    return _run_python(field, y0, t0, t1, cfg, list(events), names)


_FUSED_CACHE: dict = {}


def _fuse(fld: CompiledField, clock: CompiledField) -> CompiledField:
    """Compiled augmented field ``(f(y), rho(y))``; a non-positive clock
    rate is written as NaN so the loop reports it."""
    d, na = fld.dim, fld.args.size
    key = (fld.kernel, clock.kernel, d, na)
    if key not in _FUSED_CACHE:
        fk, ck = fld.kernel, clock.kernel

        @njit
        def fused(t, z, args, out):
            fk(t, z[:d], args[:na], out[:d])
            ck(t, z[:d], args[na:], out[d:])
            if not out[d] > 0.0:
                out[d] = np.nan

        _FUSED_CACHE[key] = fused
    return CompiledField(_FUSED_CACHE[key], np.concatenate([fld.args, clock.args]), d + 1)


def integrate_augmented(field, y0, t_span, config: IntegratorConfig | None = None,
                        clock=None, events: Sequence[Event] = (),
                        names: Sequence[str] | None = None, aux_name: str = "tau") -> Trajectory:
    """Integrate ``field`` together with an auxiliary time ``s' = clock(y)``.

    ``clock`` is either a callable ``rho(y)`` or a one-component
    :class:`CompiledField`.  The auxiliary column starts at zero and is
    returned as ``Trajectory.aux``.  Event functions see the augmented
    vector, whose last entry is the auxiliary time.
    """
    if clock is None:
        raise ValueError("integrate_augmented needs a clock")
    cfg = config or IntegratorConfig()
    y0 = np.array(y0, dtype=float).ravel()
    d = y0.size
    z0 = np.append(y0, 0.0)
    names = tuple(names) if names is not None else _default_names(d)
    t0, t1 = map(float, t_span)

    if (isinstance(field, CompiledField) and isinstance(clock, CompiledField)
            and not events and not cfg.dense_output and cfg.engine != "python"):
        traj = _run_compiled(_fuse(field, clock), z0, t0, t1, cfg, names + (aux_name,), clock_index=d)
    else:
        rho_fn = (lambda y: clock(0.0, y)[0]) if isinstance(clock, CompiledField) else clock

        def aug(t, z):
            y = z[:d]
            rho = float(rho_fn(y))
            if not rho > 0.0:
                raise ClockNotPositive(f"clock rate {rho} <= 0 at t={t}, y={y}")
            return np.append(np.asarray(field(t, y), dtype=float), rho)

        if cfg.engine == "compiled":
            cfg = IntegratorConfig(**{**cfg.__dict__, "engine": "python"})
        traj = _run_python(aug, z0, t0, t1, cfg, list(events), names + (aux_name,))
    return Trajectory(
        traj.times, traj.states[:, :d], traj.status, names, traj.events,
        aux=traj.states[:, d], aux_name=aux_name, dense=traj.dense,
        nsteps=traj.nsteps, nfev=traj.nfev,
    )
