"""Command line front end: ``aggrekin <subcommand> -p params.json ...``.

Results go to stdout as JSON; trajectories and sweep tables go to files.
Exit codes: 0 success, 2 invalid input, 3 domain violation, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_INIT,
    bifurcation_sweep,
    random_admissible_states,
    run_regime_experiment,
    simulate,
    slow_growth_constant,
    transform_equivalence,
    verify_corollary1,
    verify_theorem2,
)
from .errors import AggrekinError, InadmissibleState, ValidationError
from .integrator import IntegratorConfig, Trajectory, integrate_augmented
from .model import State, classify, equilibrium, load_params
from .svg import line_chart
from .transforms import (
    blowup_T_clock,
    blowup_t_compiled,
    compact_t_compiled,
    compact_tau_clock,
    find_slow_constants,
    from_blowup,
    from_compact,
    to_blowup,
    to_compact,
    BlowupState,
    CompactState,
)

FORMATS = ("csv", "json", "svg")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(obj.value, str):
        return obj.value
    return obj


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(_jsonable(obj), indent=2) + "\n")


def _triple(text: str) -> State:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValidationError(f"--init: expected p,q,r, got {text!r}")
    try:
        values = [float(x) for x in parts]
    except ValueError:
        raise ValidationError(f"--init: not numbers: {text!r}") from None
    if not all(math.isfinite(x) for x in values):
        raise ValidationError(f"--init: values must be finite: {text!r}")
    return State(*values)


def _positive(text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(x) and x > 0):
        raise argparse.ArgumentTypeError(f"must be finite and > 0: {text!r}")
    return x


def _load_json(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return raw


def _params(args):
    try:
        return load_params(args.params)
    except OSError as exc:
        raise ValidationError(f"{args.params}: {exc.strerror}") from None


def _check_writable(path) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        raise ValidationError(f"--out: directory does not exist: {path.parent}")
    return path


# ---------------------------------------------------------------------------
# Subcommands

def cmd_classify(args) -> int:
    regime = classify(_params(args))
    _emit({"alpha_bar": regime.alpha_bar, "regime": regime.tag.value})
    return 0


def cmd_equilibrium(args) -> int:
    params = _params(args)
    eq = equilibrium(params)
    _emit({"p_bar": eq.p_bar, "q_bar": eq.q_bar, "r_bar": eq.r_bar, "A": eq.A,
           "alpha_bar": classify(params).alpha_bar})
    return 0


def _write_trajectory(traj: Trajectory, path: Path, fmt: str, log: bool) -> None:
    header, table = traj.columns()
    if fmt == "csv":
        traj.to_csv(path)
    elif fmt == "json":
        payload = {"columns": header, "rows": table.tolist(), "status": traj.status.value}
        path.write_text(json.dumps(_jsonable(payload)) + "\n", encoding="utf-8")
    else:
        series = {name: (table[:, 0], table[:, k]) for k, name in enumerate(header) if k > 0}
        line_chart(series, path, title=f"trajectory ({', '.join(header[1:])})",
                   logx=log, logy=log)


def cmd_simulate(args) -> int:
    params = _params(args)
    init = args.init
    bad = init.violations(params.n)
    if bad:
        raise InadmissibleState(f"initial state {init} violates: {'; '.join(bad)}")
    t_eval = None
    if args.samples:
        t_eval = (np.geomspace(min(1e-3, args.t_end), args.t_end, args.samples) if args.log
                  else np.linspace(0.0, args.t_end, args.samples))
        t_eval = np.unique(np.append(t_eval, 0.0))
    cfg = IntegratorConfig(rtol=args.rtol, atol=args.atol, max_steps=args.max_steps, t_eval=t_eval)
    n = params.n
    if args.system == "original":
        traj = simulate(params, init, args.t_end, cfg)
        original = traj.final
    elif args.system == "blowup":
        bs = to_blowup(init)
        traj = integrate_augmented(blowup_t_compiled(params), bs.as_array(), (0.0, args.t_end), cfg,
                                   clock=blowup_T_clock(), names=("p1", "q1", "r1"), aux_name="T")
        original = from_blowup(BlowupState(*traj.final)).as_array()
    else:
        cs = to_compact(init, n)
        traj = integrate_augmented(compact_t_compiled(params), cs.as_array(), (0.0, args.t_end), cfg,
                                   clock=compact_tau_clock(), names=("u", "v", "w"), aux_name="tau")
        original = from_compact(CompactState(*traj.final), n).as_array()
    out = {
        "system": args.system,
        "status": traj.status.value,
        "t_end": traj.t_final,
        "nsteps": traj.nsteps,
        "final": dict(zip(traj.names, traj.final)),
        "final_original": dict(zip(("p", "q", "r"), original)),
    }
    if traj.aux is not None:
        out[traj.aux_name] = float(traj.aux[-1])
    if args.system == "compact":
        out["t_times_w"] = traj.t_final * float(traj.final[2])
    if args.out:
        path = _check_writable(args.out)
        fmt = args.format or (path.suffix.lstrip(".").lower() if path.suffix.lstrip(".").lower() in FORMATS else "csv")
        _write_trajectory(traj, path, fmt, args.log)
        out["out"] = str(path)
        out["format"] = fmt
    _emit(out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_json(args.config) if args.config else {}
    fixed = dict(cfg.get("fixed", {}))
    for key, flag in (("n", args.n), ("kappa_m1", args.kappa_m1), ("kappa_m", args.kappa_m)):
        if flag is not None:
            fixed[key] = flag
    k1_range = tuple(cfg.get("k1_range", (0.0, args.k1_max or 5.0)))
    k2_range = tuple(cfg.get("k2_range", (0.0, args.k2_max or 5.0)))
    if args.k1_max:
        k1_range = (k1_range[0], args.k1_max)
    if args.k2_max:
        k2_range = (k2_range[0], args.k2_max)
    resolution = int(args.resolution or cfg.get("resolution", 200))
    if resolution < 2:
        raise ValidationError("--resolution must be >= 2")
    try:
        res = bifurcation_sweep(k1_range, k2_range, fixed, resolution)
    except ValueError as exc:
        if isinstance(exc, AggrekinError):
            raise
        raise ValidationError(str(exc)) from None
    out = {"resolution": resolution, "k1_range": list(k1_range), "k2_range": list(k2_range),
           "fixed": res.fixed, "meta": res.meta,
           "curve_alpha1_points": len(res.curve_alpha1), "curve_alpha0_points": len(res.curve_alpha0)}
    if len(res.curve_alpha1):
        out["curve_alpha1_k2_at_max_k1"] = float(res.curve_alpha1[-1, 1])
    if args.out_dir:
        d = Path(args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        res.grid_csv(d / "sweep_grid.csv")
        res.curve_csv(1, d / "curve_alpha1.csv")
        res.curve_csv(0, d / "curve_alpha0.csv")
        line_chart({"alpha_bar = 1": (res.curve_alpha1[:, 0], res.curve_alpha1[:, 1]),
                    "alpha_bar = 0": (res.curve_alpha0[:, 0], res.curve_alpha0[:, 1])},
                   d / "sweep.svg", title="regime boundaries", xlabel="kappa1")
        out["out_dir"] = str(d)
    _emit(out)
    return 0


def cmd_verify(args) -> int:
    params = _params(args)
    if args.what == "theorem2":
        rep = verify_theorem2(params, u0=args.u0, v0=args.v0, eps_list=tuple(args.eps))
        d = rep.to_dict()
        d["order_checks"] = [
            {"eps_pair": r["eps_pair"], "uv_in_[1.5,3]": bool(1.5 <= r["u"] <= 3 and 1.5 <= r["v"] <= 3),
             "w_in_[3,5]": bool(3 <= r["w"] <= 5)} for r in rep.ratios
        ]
        _emit(d)
    elif args.what == "corollary1":
        rep = verify_corollary1(params, init=args.init, t_end=args.t_end)
        d = rep.to_dict()
        d["one_over_A_star"] = 1.0 / rep.A_star
        _emit(d)
    elif args.what == "transforms":
        rng = np.random.default_rng(args.seed)
        states = random_admissible_states(params.n, args.count, rng)
        reports = {}
        for kind in ("blowup", "compact"):
            devs = [transform_equivalence(params, s, kind, own_time=args.own_time).max_rel_deviation
                    for s in states]
            reports[kind] = {"max_rel_deviation": max(devs), "per_state": devs}
        _emit({"seed": args.seed, "count": args.count, "own_time": args.own_time, **reports})
    else:
        verdict = run_regime_experiment(params, init=args.init, horizon=args.t_end)
        d = verdict.to_dict()
        if verdict.kind.value == "Growing":
            sc = find_slow_constants(params, to_compact(args.init, params.n).w)
            d["predicted"] = {"coeff_q": sc.A_star**2, "coeff_p": sc.u_star * sc.A_star,
                              "sqrt_law_C": slow_growth_constant(params)}
        if args.out:
            verdict.trajectory.to_csv(_check_writable(args.out))
        _emit(d)
    return 0


def cmd_constants(args) -> int:
    params = _params(args)
    eps = args.epsilon if args.epsilon is not None else to_compact(args.init, params.n).w
    _emit(find_slow_constants(params, eps).to_dict())
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aggrekin", description="Cross-linked aggregate kinetics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_params(p):
        p.add_argument("-p", "--params", required=True, help="JSON parameter file")
        return p

    p = with_params(sub.add_parser("classify", help="alpha_bar and regime"))
    p.set_defaults(func=cmd_classify)

    p = with_params(sub.add_parser("equilibrium", help="nontrivial equilibrium"))
    p.set_defaults(func=cmd_equilibrium)

    p = with_params(sub.add_parser("simulate", help="integrate a trajectory"))
    p.add_argument("--init", type=_triple, default=DEFAULT_INIT, help="initial p,q,r (default 2,4,3)")
    p.add_argument("--t-end", type=_positive, required=True)
    p.add_argument("--rtol", type=_positive, default=1e-10)
    p.add_argument("--atol", type=_positive, default=1e-12)
    p.add_argument("--max-steps", type=int, default=10_000_000)
    p.add_argument("--system", choices=("original", "blowup", "compact"), default="original")
    p.add_argument("--samples", type=int, default=0,
                   help="record this many sample times instead of every step")
    p.add_argument("--log", action="store_true", help="log-spaced samples and log axes")
    p.add_argument("--out", help="trajectory file")
    p.add_argument("--format", choices=FORMATS, help="default: from the file extension, else csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="alpha_bar over a (kappa1, kappa2) grid")
    p.add_argument("--config", help="JSON with k1_range, k2_range, resolution, fixed")
    p.add_argument("--k1-max", type=_positive)
    p.add_argument("--k2-max", type=_positive)
    p.add_argument("--resolution", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--kappa-m1", type=_positive)
    p.add_argument("--kappa-m", type=_positive)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="numerical checks of the asymptotic results")
    vsub = p.add_subparsers(dest="what", required=True)
    v = with_params(vsub.add_parser("theorem2", help="error orders of the composite approximation"))
    v.add_argument("--u0", type=_positive, default=1.0)
    v.add_argument("--v0", type=float, default=0.0)
    v.add_argument("--eps", type=_positive, nargs="+", default=[1e-2, 5e-3, 2.5e-3])
    v = with_params(vsub.add_parser("corollary1", help="late-time limits of (t*w, u, v)"))
    v.add_argument("--init", type=_triple, default=DEFAULT_INIT)
    v.add_argument("--t-end", type=_positive, default=1e4)
    v = with_params(vsub.add_parser("transforms", help="flow equivalence of the transformed systems"))
    v.add_argument("--count", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--own-time", type=_positive, default=2.0)
    v = with_params(vsub.add_parser("growth", help="regime verdict from a simulated trajectory"))
    v.add_argument("--init", type=_triple, default=DEFAULT_INIT)
    v.add_argument("--t-end", type=_positive, default=None, help="horizon (default 1e4 or 1e5)")
    v.add_argument("--out", help="write the sampled trajectory as CSV")
    p.set_defaults(func=cmd_verify)

    p = with_params(sub.add_parser("constants", help="slow-manifold constants u*, v*, A*"))
    p.add_argument("--epsilon", type=_positive, help="initial w; default from --init")
    p.add_argument("--init", type=_triple, default=DEFAULT_INIT)
    p.set_defaults(func=cmd_constants)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except AggrekinError as exc:
        print(f"aggrekin: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"aggrekin: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
