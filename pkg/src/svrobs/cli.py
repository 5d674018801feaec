"""Command-line front end.

Every subcommand takes the same options after its name, e.g.::

    svrobs table2 --config default --seed 7 --out run1
    svrobs sweep --format json

With ``--out`` results are written as files in that directory (plus PNG
figures unless ``--no-plots``); without it the delimited output goes to
standard output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments as ex
from .bounds import compute_bounds
from .estimator import Assembly, Scaling, assemble_regression_data, estimate_ols, estimate_svr
from .exceptions import ConfigError, SvrObsError
from .lti import RolloutSet, collect_rollouts
from .observer import IntervalMatrix, design_gain

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default="default", help='JSON config file or "default"')
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--system", help="STABLE, UNSTABLE (overrides the config)")
    p.add_argument("--out", help="output directory; stdout if omitted")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, help="worker threads (default: $SYSID_THREADS or 1)")
    p.add_argument("--strict", action="store_true", help="exit 3 when a gain design is infeasible")
    p.add_argument("--no-plots", dest="plots", action="store_false", help="skip PNG figures")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svrobs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    sp = sub.add_parser("simulate", parents=[common], help="collect rollouts and write them as JSON")
    sp.add_argument("--rollouts", type=int, help="rollout count (default: largest configured)")
    sp = sub.add_parser("estimate", parents=[common], help="OLS and SVR estimates from rollouts")
    sp.add_argument("--data", help="rollout JSON from `simulate` (default: simulate afresh)")
    sp.add_argument("--rollouts", type=int)
    sp = sub.add_parser("bounds", parents=[common], help="interval bounds sweep over (N, gamma)")
    sp = sub.add_parser("design", parents=[common], help="certified observer gains per gamma")
    sp.add_argument("--data", help="rollout JSON from `simulate`")
    sp.add_argument("--rollouts", type=int)
    sub.add_parser("evaluate", parents=[common], help="Monte Carlo observer cost against the bound")
    sub.add_parser("table2", parents=[common], help="OLS vs SVR RMSE on both benchmark systems")
    sub.add_parser("sweep", parents=[common], help="bounds and observer evaluation, one row per cell")
    return parser


def _emit(args, name: str, rows) -> None:
    """Write rows as CSV or JSON lines to ``--out/name.*`` or stdout."""
    if args.format == "json":
        text = "\n".join(ex.rows_to_json(rows)) + ("\n" if rows else "")
        ext = "jsonl"
    else:
        text = ex.rows_to_csv(rows)
        ext = "csv"
    _write(args, f"{name}.{ext}", text)


def _write(args, filename: str, text: str) -> None:
    if args.out:
        with open(os.path.join(args.out, filename), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _plots(args, fn, rows):
    if args.out and args.plots and rows:
        from . import plotting
        getattr(plotting, fn)(rows, args.out)


def _rollouts(args, cfg, sys_):
    if getattr(args, "data", None):
        try:
            with open(args.data, encoding="utf-8") as fh:
                return RolloutSet.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read data file {args.data}: {exc.strerror}") from None
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"{args.data}: malformed rollout data ({exc})") from None
    n = args.rollouts or max(cfg.rollout_counts)
    return collect_rollouts(sys_, cfg.noise, n, cfg.t0, cfg.seed)


def _estimates(cfg, data):
    reg = assemble_regression_data(data, Assembly(cfg.assembly))
    out = [estimate_ols(reg)]
    out += [estimate_svr(reg, g, Scaling(cfg.estimator_scaling)) for g in cfg.gammas]
    return out


def cmd_simulate(args, cfg, threads):
    data = _rollouts(args, cfg, ex.resolve_system(cfg.system))
    _write(args, "rollouts.json", data.to_json() + "\n")
    return EXIT_OK


def cmd_estimate(args, cfg, threads):
    data = _rollouts(args, cfg, ex.resolve_system(cfg.system))
    ests = _estimates(cfg, data)
    if args.format == "json":
        _write(args, "estimates.jsonl", "".join(e.to_json() + "\n" for e in ests))
        return EXIT_OK
    lines = ["mode,gamma,matrix,row,col,value"]
    for e in ests:
        for label, mat in (("A", e.a_hat), ("B", e.b_hat)):
            for (i, j), v in np.ndenumerate(mat):
                lines.append(f"{e.mode.value},{ex._fmt(e.gamma)},{label},{i},{j},{ex._fmt(v)}")
    _write(args, "estimates.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_design(args, cfg, threads):
    sys_ = ex.resolve_system(cfg.system)
    data = _rollouts(args, cfg, sys_)
    infeasible = False
    docs = []
    for est in _estimates(cfg, data)[1:]:
        p = ex._bound_params(cfg, sys_, data.n_rollouts, est.gamma, cfg.noise.sigma_w)
        br = compute_bounds(est, p)
        iv = IntervalMatrix(br.a_centers(), br.radius_a)
        cert = design_gain(iv, sys_.c, confidence=1.0 - cfg.delta)
        doc = {"gamma": est.gamma, "n_rollouts": data.n_rollouts}
        if cert is None:
            infeasible = True
            doc.update(feasible=False, interval=iv.to_dict())
        else:
            doc.update(cert.to_dict())
        docs.append(doc)
    if args.format == "json":
        _write(args, "design.jsonl", "".join(json.dumps(d) + "\n" for d in docs))
    else:
        lines = ["gamma,n_rollouts,feasible,target,min_margin,radius,gain"]
        for d in docs:
            margin = min(d["per_row_margin"]) if d["feasible"] else None
            gain = ";".join(ex._fmt(v) for row in d["gain"] for v in row) if d["feasible"] else ""
            lines.append(",".join([ex._fmt(d["gamma"]), str(d["n_rollouts"]), str(int(d["feasible"])),
                                   ex._fmt(d.get("target")), ex._fmt(margin),
                                   ex._fmt(d["interval"]["radius"]), gain]))
        _write(args, "design.csv", "\n".join(lines) + "\n")
    if infeasible:
        print("warning: no certified gain for at least one gamma", file=sys.stderr)
        if args.strict:
            return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_bounds(args, cfg, threads):
    rows = ex.run_bound_sweep(cfg, threads)
    _emit(args, "bounds", rows)
    _plots(args, "plot_bound_sweep", rows)
    return EXIT_INFEASIBLE if args.strict and any(r.gain_feasible < 1 for r in rows) else EXIT_OK


def cmd_evaluate(args, cfg, threads):
    rows = ex.run_observer_eval(cfg, threads)
    _emit(args, "observer", rows)
    _plots(args, "plot_observer_eval", rows)
    return EXIT_INFEASIBLE if args.strict and any(r.gain_feasible < 1 for r in rows) else EXIT_OK


def cmd_table2(args, cfg, threads):
    rows, summary = ex.run_table2(cfg, threads)
    _emit(args, "table2", rows)
    if args.out:
        _emit(args, "table2_summary", summary)
    _plots(args, "plot_table2", rows)
    return EXIT_OK


def cmd_sweep(args, cfg, threads):
    rows = ex.run_sweep(cfg, threads)
    _emit(args, "sweep", rows)
    _plots(args, "plot_bound_sweep", rows)
    _plots(args, "plot_observer_eval", rows)
    return EXIT_INFEASIBLE if args.strict and any(r.gain_feasible < 1 for r in rows) else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "bounds": cmd_bounds,
    "design": cmd_design,
    "evaluate": cmd_evaluate,
    "table2": cmd_table2,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ex.load_config(args.config)
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.system is not None:
            changes["system"] = args.system
        if changes:
            cfg = cfg.with_(**changes)
        threads = ex.resolve_threads(args.threads)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](args, cfg, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SvrObsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
