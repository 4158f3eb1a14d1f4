"""Command line entry point: ``sms-adaptive <command> ...``."""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import scenario as scn
from . import sim
from . import telemetry as tm


def _load_scenario(path):
    if path in (None, "paper"):
        return scn.paper_config()
    if path == "reduced":
        return scn.reduced_config()
    return scn.load(path)


def apply_overrides(cfg, ideal_actuators=False, duration=None, dt=None, seed=None, truth_diagnostics=False):
    cfg = copy.deepcopy(cfg)
    if ideal_actuators:
        cfg["actuators"]["mode"] = "ideal"
    if duration is not None and duration > cfg["duration_s"]:
        # shorter runs only truncate the timeline (see ``_run_one``) so that
        # scheduled events keep validating against the configured horizon
        cfg["duration_s"] = float(duration)
    if dt is not None:
        cfg["integrator"]["dt_s"] = float(dt)
    if seed is not None:
        cfg["seed"] = int(seed)
    if truth_diagnostics:
        cfg["truth_diagnostics"] = True
    return cfg


def set_path(cfg, dotted, value):
    """Set ``cfg["a"]["b"][0]`` from ``"a.b.0"``."""
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node[int(k)] if isinstance(node, list) else node[k]
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def grid_points(grid):
    """Cartesian product of ``{"dotted.path": [values, ...]}`` in sorted key order."""
    keys = sorted(grid)
    for values in itertools.product(*(grid[k] for k in keys)):
        yield dict(zip(keys, values))


def _progress(t):
    print(f"  t = {t:8.2f} s", file=sys.stderr, flush=True)


def _run_one(cfg, out_dir, quiet=True, duration=None):
    sc = scn.Scenario(cfg)
    try:
        res = sim.run(sc, out_dir=out_dir, duration=duration, progress=None if quiet else _progress)
    except sim.BlowupError as exc:
        if out_dir is not None and getattr(exc, "partial", None) is not None:
            os.makedirs(out_dir, exist_ok=True)
            header, rows = exc.partial
            if len(rows):
                tm.write_csv(os.path.join(out_dir, "telemetry.csv"), header, rows)
        return {"ok": False, "blowup_time_s": exc.t, "error": str(exc)}
    return {"ok": bool(res.summary["run"]["projection_held"]), "summary": res.summary}


def _sweep_job(args):
    index, point, cfg, out_dir = args
    for k, v in point.items():
        set_path(cfg, k, v)
    run_dir = os.path.join(out_dir, f"run_{index:04d}")
    try:
        result = _run_one(cfg, run_dir)
    except scn.ConfigError as exc:
        result = {"ok": False, "error": str(exc)}
    result["point"] = point
    result["dir"] = run_dir
    return index, result


def cmd_run(args):
    cfg = apply_overrides(_load_scenario(args.scenario), args.ideal_actuators, args.duration, args.dt, args.seed,
                          args.truth_diagnostics)
    result = _run_one(cfg, args.out, quiet=args.quiet, duration=args.duration)
    if not result["ok"]:
        msg = result.get("error", "projection invariants violated")
        print(f"run failed: {msg}", file=sys.stderr)
        return 1
    s = result["summary"]
    print(json.dumps({"asymptotic_norms": s["asymptotic_norms"], "lambda_hat_final": s["lambda_hat_final"],
                      "projection_held": s["run"]["projection_held"], "wall_time_s": s["wall_time_s"]}, indent=2))
    return 0


def cmd_paper_scenario(args):
    cfg = scn.reduced_config() if args.reduced else scn.paper_config()
    scn.dump(cfg, args.emit)
    return 0


def cmd_sweep(args):
    base = _load_scenario(args.scenario)
    with open(args.grid) as fh:
        grid = json.load(fh)
    os.makedirs(args.out, exist_ok=True)
    jobs = [(i, p, copy.deepcopy(base), args.out) for i, p in enumerate(grid_points(grid))]
    results = [None] * len(jobs)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for i, r in pool.map(_sweep_job, jobs):
                results[i] = r
    else:
        for job in jobs:
            i, r = _sweep_job(job)
            results[i] = r
    rows = []
    for r in results:
        row = {"point": r["point"], "dir": r["dir"], "ok": r["ok"]}
        if "summary" in r:
            row["asymptotic_norms"] = r["summary"]["asymptotic_norms"]
            row["lambda_hat_final"] = r["summary"]["lambda_hat_final"]
        else:
            row["error"] = r.get("error")
        rows.append(row)
    tm.write_json(os.path.join(args.out, "sweep.json"), rows)
    print(f"{sum(r['ok'] for r in rows)}/{len(rows)} runs ok; index in {os.path.join(args.out, 'sweep.json')}")
    return 0 if all(r["ok"] for r in rows) else 1


def cmd_summarize(args):
    header, data = tm.read_csv(args.telemetry)
    summary = tm.summarize(header, data, final_window=args.window)
    text = json.dumps(summary, indent=2, sort_keys=True)
    if args.out:
        tm.write_json(args.out, summary)
    print(text)
    return 0


def cmd_report(args):
    from . import plotting

    header, data = tm.read_csv(args.telemetry)
    truth = None
    if args.scenario:
        truth = scn.Scenario(_load_scenario(args.scenario)).theta_true[-1]
    out = args.out or os.path.dirname(os.path.abspath(args.telemetry))
    for path in plotting.report(header, data, out, truth):
        print(path)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="sms-adaptive", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("--scenario", default="paper", help="config JSON, or 'paper' / 'reduced' for the built-ins")
    r.add_argument("--out", required=True, help="output directory for telemetry.csv and summary.json")
    r.add_argument("--ideal-actuators", action="store_true")
    r.add_argument("--duration", type=float)
    r.add_argument("--dt", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--truth-diagnostics", action="store_true", help="log the Lyapunov function (uses the truth)")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("paper-scenario", help="write the built-in scenario config")
    e.add_argument("--emit", required=True)
    e.add_argument("--reduced", action="store_true", help="emit the two-joint reduction instead")
    e.set_defaults(func=cmd_paper_scenario)

    s = sub.add_parser("sweep", help="run a grid of config variations")
    s.add_argument("--scenario", default="paper")
    s.add_argument("--grid", required=True, help='JSON object {"dotted.config.path": [values, ...]}')
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", default="sweep_out")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("summarize", help="recompute a run summary from telemetry alone")
    m.add_argument("--telemetry", required=True)
    m.add_argument("--window", type=float, default=tm.FINAL_WINDOW, help="final fraction used for asymptotic norms")
    m.add_argument("--out")
    m.set_defaults(func=cmd_summarize)

    g = sub.add_parser("report", help="render figures from telemetry")
    g.add_argument("--telemetry", required=True)
    g.add_argument("--scenario", help="config used to draw the true end-effector parameters")
    g.add_argument("--out")
    g.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except scn.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
