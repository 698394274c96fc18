"""
``rotlab`` command line.

Exit status is 0 when every verdict of the produced report passes, 2 when
some verdict fails and 1 on any error; errors are printed to stderr as one
JSON line ``{"error": <kind>, "message": <text>}``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from rotlab import experiments as ex
from rotlab.approx import approximate_solution, residual_array, vacuum_guard
from rotlab.data import PRESETS, make_data
from rotlab.errors import ConfigError, RotlabError
from rotlab.io import build_params, load_config, persist_report, atomic_write
from rotlab.pressureless import PressurelessFlow, threshold_analyze
from rotlab.reports import RunReport, verdict_rule
from rotlab.solver import FlowState, compare_to_approx, integrate
from rotlab.spectral import grad_linf_array, save_snapshot, sobolev_norm_array

NUMERIC_FLAGS = ("tau", "sigma", "delta", "gamma", "n", "cfl", "t_end", "seed", "amplitude")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("argv", message)


def _common(p):
    p.add_argument("--tau", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--family", choices=("rsw", "isentropic", "ideal"))
    p.add_argument("--n", type=int)
    p.add_argument("--cfl", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--data", help=f"preset ({', '.join(PRESETS)}) or .bin snapshot; default zero")
    p.add_argument("--amplitude", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="directory for CSV/JSON/figure output")
    p.add_argument("--config", help="JSON run configuration; flags given on the command line win")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rotlab", description="Rotating shallow-water / Euler laboratory on the 2D torus")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, helptext in (
        ("threshold", "critical-threshold report for the initial velocity"),
        ("pressureless", "closed-form pressureless velocity over one period"),
        ("approx", "second approximation (h2, p2, u2) at sample times"),
        ("simulate", "integrate the full system"),
        ("compare", "full solution against the approximation"),
    ):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        if name in ("pressureless", "approx", "compare"):
            p.add_argument("--samples", type=int, default=8)
    for name in ("sweep", "lifespan"):
        p = sub.add_parser(name, help=f"{name} study from a JSON spec")
        p.add_argument("--spec", help="SweepSpec JSON document")
        p.add_argument("--out")
    p = sub.add_parser("nio", help="near-inertial-oscillation scenario")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--out")
    return parser


def _resolve(args):
    """Parameters and data from the flags, with gaps filled from ``--config``."""
    if args.config:
        cfg = load_config(args.config)
        doc = cfg.to_dict()
        if args.tau is None and args.sigma is None and args.delta is None:
            args.tau, args.sigma = cfg.params.tau, cfg.params.sigma
        for key in ("gamma", "family", "n", "cfl"):
            if getattr(args, key) is None:
                setattr(args, key, doc[key])
        for key in ("data", "seed", "amplitude", "t_end", "out"):
            if getattr(args, key) is None:
                setattr(args, key, doc[key])
    args.family = args.family or "rsw"
    args.n = 64 if args.n is None else args.n
    args.data = args.data or "zero"
    args.seed = 0 if args.seed is None else args.seed
    gamma = args.gamma
    if gamma is None and args.family != "rsw":
        gamma = 1.4
    params = build_params(args.tau, args.sigma, args.delta, gamma=gamma, family=args.family, n=args.n, cfl=args.cfl)
    data = make_data(args.data, args.n, args.amplitude, args.seed, tau=params.tau, sigma=params.sigma)
    return params, data


def _echo(args) -> dict:
    return {k: getattr(args, k) for k in NUMERIC_FLAGS if getattr(args, k, None) is not None}


# -- subcommands --------------------------------------------------------------


def cmd_threshold(args):
    params, data = _resolve(args)
    rep = threshold_analyze(data.u, params.tau)
    doc = dict(rep.to_dict(), flags=_echo(args), data=data.descriptor)
    report = RunReport(kind="threshold", scalars=doc)
    report.verdicts = {"subcritical": rep.subcritical}
    return report, doc


@verdict_rule("threshold")
def _threshold_verdicts(report):
    return {"subcritical": bool(report.scalars.get("subcritical"))}


def cmd_pressureless(args):
    params, data = _resolve(args)
    flow = PressurelessFlow(data.u, params.tau)
    g = data.grid
    T = params.period
    report = RunReport(kind="pressureless", meta={"params": params.to_dict(), "data": data.descriptor,
                                                  "flags": _echo(args)})
    u0 = data.u.values
    out = Path(args.out) if args.out else None
    for k in range(args.samples + 1):
        t = T * k / args.samples
        u = flow.velocity_array(t)
        report.add_row(t=t, deviation=float(np.max(np.abs(u - u0))), grad=grad_linf_array(g, u),
                       sobolev3=math.hypot(sobolev_norm_array(g, u[0], 3), sobolev_norm_array(g, u[1], 3)))
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            save_snapshot(out / f"u1_{k:03d}.bin", [u[0], u[1]])
    report.scalars["period"] = T
    report.judge()
    return report, None


@verdict_rule("pressureless")
def _pressureless_verdicts(report):
    return {"u1_closure": report.column("deviation")[-1] <= ex.U1_CLOSURE}


def cmd_approx(args):
    params, data = _resolve(args)
    flow = PressurelessFlow(data.u, params.tau)
    g = data.grid
    t_end = params.period if args.t_end is None else args.t_end
    report = RunReport(kind="approx", meta={"params": params.to_dict(), "data": data.descriptor,
                                            "flags": _echo(args)})
    series = []
    out = Path(args.out) if args.out else None
    for k in range(args.samples + 1):
        t = t_end * k / args.samples
        a = approximate_solution(data.h, data.u, params, t, S0=data.S, flow=flow)
        series.append((t, a.h2))
        R = residual_array(g, a.u1.values, a.h2.values, params, t, None if a.S2 is None else a.S2.values)
        report.add_row(t=t, h2_inf=float(np.max(np.abs(a.h2.values))),
                       min_depth=float(np.min(1.0 + params.sigma * a.h2.values)),
                       correction=float(np.max(np.abs(a.u2.values - a.u1.values))),
                       residual=math.hypot(sobolev_norm_array(g, R[0], 1), sobolev_norm_array(g, R[1], 1)))
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            a.save(out / f"approx_{k:03d}")
    guard = vacuum_guard(series, params)
    report.scalars.update({"alpha0": guard.alpha0, "min_depth": guard.minimum,
                           "p2_inf_ratio_max": max(guard.p2_inf_ratio),
                           "p2_sobolev_ratio_max": max(guard.p2_sobolev_ratio)})
    report.judge()
    return report, None


@verdict_rule("approx")
def _approx_verdicts(report):
    return {"non_vacuum": bool(np.all(report.column("min_depth") > 0)),
            "finite": bool(np.all(np.isfinite(report.column("residual"))))}


def cmd_simulate(args):
    params, data = _resolve(args)
    t_end = params.period if args.t_end is None else args.t_end
    state = FlowState.from_height(data.h, data.u, params, data.S)
    samples = np.linspace(0.0, t_end, 21)[1:]
    final, report = integrate(state, t_end, samples=samples)
    report.meta.update(data=data.descriptor, flags=_echo(args))
    report.judge()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_snapshot(out / "final.bin", list(final.U))
    return report, None


@verdict_rule("simulate")
def _simulate_verdicts(report):
    return {"smooth": not bool(report.scalars.get("broken_down")),
            "non_vacuum": bool(np.all(report.column("min_depth") > 0))}


def cmd_compare(args):
    params, data = _resolve(args)
    t_end = params.period if args.t_end is None else args.t_end
    flow = PressurelessFlow(data.u, params.tau)
    state = FlowState.from_height(data.h, data.u, params, data.S)
    report = RunReport(kind="compare", meta={"params": params.to_dict(), "data": data.descriptor,
                                             "flags": _echo(args)})
    for k in range(args.samples + 1):
        t = t_end * k / args.samples
        if t > state.t:
            state, _ = integrate(state, t)
            if state.broken_down:
                break
        e = compare_to_approx(state, approximate_solution(data.h, data.u, params, t, S0=data.S, flow=flow))
        report.add_row(t=t, error=e.total, error_p=e.p, error_u=e.u, error_h=e.h,
                       error_S=e.S if e.S is not None else float("nan"))
    report.scalars.update({"delta": params.delta, "broken_down": state.broken_down})
    report.judge()
    return report, None


@verdict_rule("compare")
def _compare_verdicts(report):
    return {"smooth": not bool(report.scalars.get("broken_down")),
            "finite": bool(np.all(np.isfinite(report.column("error"))))}


def _load_spec(path, defaults=None):
    doc = dict(defaults or {})
    if path:
        try:
            doc.update(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError("spec", f"invalid JSON: {exc}") from None
    return ex.SweepSpec.from_dict(doc)


def cmd_sweep(args):
    spec = _load_spec(args.spec)
    return ex.delta_sweep(spec), None


def cmd_lifespan(args):
    spec = _load_spec(args.spec, ex.LIFESPAN_DEFAULTS)
    return ex.lifespan_study(spec), None


def cmd_nio(args):
    report, sweep = ex.nio_scenario(n=args.n)
    if args.out:
        persist_report(sweep, args.out, "nio_sweep")
    return report, None


COMMANDS = {
    "threshold": cmd_threshold,
    "pressureless": cmd_pressureless,
    "approx": cmd_approx,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "lifespan": cmd_lifespan,
    "nio": cmd_nio,
}


def _fail(kind, message):
    print(json.dumps({"error": kind, "message": " ".join(str(message).split())}), file=sys.stderr)
    return 1


def cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        report, doc = COMMANDS[args.command](args)
        if args.out:
            persist_report(report, args.out, args.command)
            if doc is not None:
                atomic_write(Path(args.out) / f"{args.command}_report.json",
                             json.dumps(doc, sort_keys=True) + "\n")
        if doc is None:
            doc = report.summary()
        print(json.dumps(doc, sort_keys=True))
        return 0 if report.passed else 2
    except RotlabError as exc:
        return _fail(exc.kind, exc)
    except (ValueError, OSError, ArithmeticError) as exc:
        return _fail(type(exc).__name__, exc)


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
