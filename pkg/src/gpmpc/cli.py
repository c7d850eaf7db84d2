"""Command-line pipeline: generate -> sysid -> plan -> track -> report.

Exit codes: 0 success, 2 bad input, 3 no path or solver non-convergence, 4 I/O.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfglib
from . import gp as gplib
from . import planner, sim, sysid
from .plotting import plot_xt, plot_xy

EXIT_OK, EXIT_INPUT, EXIT_NOPATH, EXIT_IO = 0, 2, 3, 4
BUNDLE_SCHEMA = 1


class NonConvergence(RuntimeError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(path: Path, text: str):
    path.write_text(text)


def _outdir(args, cfg) -> Path:
    out = Path(args.out or cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


def _load_cfg(args) -> dict:
    return cfglib.load(args.config) if args.config else cfglib.resolve({})


# --- commands --------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args, cfg)
    model = cfglib.ground_truth(cfg)
    sweep = cfglib.sweep(cfg)
    traj = sim.generate_training_run(model, sweep, dt=cfg["sweep"]["dt"], seed=cfg["ground_truth"]["seed"])
    traj.to_csv(out / "sweep.csv")
    _write(out / "config.resolved.json", cfglib.dumps(cfg) + "\n")
    _write(
        out / "generate.json",
        _dump({"rows": len(traj), "grid_size": int(sweep.grid().shape[0]), "dwell_steps": sweep.dwell_steps,
               "seed": cfg["ground_truth"]["seed"], "config": cfg}),
    )
    print(f"wrote {len(traj)} rows to {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_sysid(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args, cfg)
    traj = sysid.RawTrajectory.from_csv(args.data)
    s = cfg["sysid"]
    ident = sysid.identify(traj, cutoff_hz=s["cutoff_hz"], steady_only=s["steady_only"])
    seed = s["split_seed"]
    gx, gy, report = sysid.train_disturbance_models(
        ident.residuals, seed, max_train=s["max_train"], hyper_points=s["hyper_points"],
        search_kw=cfglib.search_space(cfg, seed),
    )
    bundle = {
        "schema_version": BUNDLE_SCHEMA,
        "a0_hat": ident.a0_hat,
        "linear_fit": ident.fit.__dict__,
        "gp_x": json.loads(gplib.to_json(gx)),
        "gp_y": json.loads(gplib.to_json(gy)),
    }
    _write(out / "model.json", json.dumps(bundle, sort_keys=True) + "\n")
    _write(out / "mae_report.json", report.to_json() + "\n")
    _write(out / "config.resolved.json", cfglib.dumps(cfg) + "\n")
    print(f"a0_hat={ident.a0_hat:.6g}  MAE x={report.x.mae_pct:.2f}%  y={report.y.mae_pct:.2f}%")
    return EXIT_OK


def load_bundle(path):
    p = Path(path)
    if p.is_dir():
        p = p / "model.json"
    doc = json.loads(p.read_text())
    if doc.get("schema_version") != BUNDLE_SCHEMA:
        raise ValueError(f"{p}: unsupported bundle schema {doc.get('schema_version')!r}")
    return float(doc["a0_hat"]), (gplib.from_json(doc["gp_x"]), gplib.from_json(doc["gp_y"]))


def cmd_plan(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args, cfg)
    world = planner.World.from_json(Path(args.world).read_text())
    pcfg = cfglib.planner_config(cfg)
    path = planner.plan(args.start, args.goal, world, pcfg)
    path.to_csv(out / "path.csv")
    _write(out / "config.resolved.json", cfglib.dumps(cfg) + "\n")
    _write(
        out / "plan.json",
        _dump({"cost": path.cost, "n_waypoints": int(path.waypoints.shape[0]), "start": list(args.start),
               "goal": list(args.goal), "world": json.loads(world.to_json()), "planner": cfg["planner"]}),
    )
    print(f"path cost {path.cost:.6g} with {path.waypoints.shape[0]} waypoints")
    return EXIT_OK


def _write_log(log, out: Path, prefix: str, diagnostics):
    log.to_csv(out / f"{prefix}log.csv")
    with open(out / f"{prefix}diagnostics.jsonl", "w") as fh:
        for d in diagnostics:
            fh.write(d.to_json() + "\n")


def _track_one(cfg, bundle_path, path_csv, world_json, baseline, seed, out: Path) -> dict:
    a0_hat, gps = load_bundle(bundle_path)
    waypoints = None
    if path_csv is not None:
        raw = planner.read_path_csv(path_csv)
        spacing = a0_hat * cfg["scenario"]["f_nominal"] * cfg["scenario"]["dt"]
        waypoints = planner.resample_path(raw, spacing)
    scen = cfglib.scenario(cfg, waypoints)
    world = planner.World.from_json(Path(world_json).read_text()) if world_json else None

    diags = []
    log = sim.simulate_closed_loop(scen, a0_hat, gps, seed, diagnostics=diags)
    _write_log(log, out, "", diags)
    summary = {"seed": seed, "a0_hat": a0_hat, "steps": len(log), "metrics": sim.metrics(log),
               "all_converged": bool(np.all(log.converged)), "config": cfg}
    base = None
    if baseline:
        bdiags = []
        base = sim.simulate_closed_loop(scen, a0_hat, None, seed, diagnostics=bdiags)
        _write_log(base, out, "baseline_", bdiags)
        summary["baseline_metrics"] = sim.metrics(base)
    _write(out / "metrics.json", _dump(summary["metrics"]))
    _write(out / "summary.json", _dump(summary))
    plot_xy(log, out / "xy.svg", world=world, baseline=base)
    plot_xt(log, out / "xt.svg", baseline=base)
    return summary


def _parse_seeds(text):
    if ".." in text:
        a, b = text.split("..", 1)
        return list(range(int(a), int(b) + 1))
    return [int(v) for v in text.split(",")]


def cmd_track(args) -> int:
    cfg = _load_cfg(args)
    if abs(cfg["scenario"]["dt"] - cfg["mpc"]["dt"]) > 1e-12 * cfg["mpc"]["dt"]:
        raise cfglib.ConfigError(f"scenario.dt {cfg['scenario']['dt']} does not match mpc.dt {cfg['mpc']['dt']}")
    out = _outdir(args, cfg)
    _write(out / "config.resolved.json", cfglib.dumps(cfg) + "\n")
    seeds = _parse_seeds(args.seeds) if args.seeds else [int(cfg["seed"])]
    jobs = [(cfg, args.bundle, args.path, args.world, args.baseline, s,
             out if len(seeds) == 1 and not args.seeds else out / f"seed_{s}") for s in seeds]
    for job in jobs:
        job[-1].mkdir(parents=True, exist_ok=True)
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            summaries = list(ex.map(_track_one, *zip(*jobs)))
    else:
        summaries = [_track_one(*job) for job in jobs]
    for s in summaries:
        line = f"seed {s['seed']}: rms={s['metrics']['rms_error']:.4g}"
        if "baseline_metrics" in s:
            line += f"  baseline rms={s['baseline_metrics']['rms_error']:.4g}"
        print(line)
    if args.strict and not all(s["all_converged"] for s in summaries):
        raise NonConvergence("QP solver hit max_iters on at least one step")
    return EXIT_OK


REPORT_FIELDS = ["run", "seed", "rms_error", "max_error", "mean_abs_dhat_error",
                 "baseline_rms_error", "baseline_max_error"]


def cmd_report(args) -> int:
    rows = []
    for p in args.summaries:
        s = json.loads(Path(p).read_text())
        m, b = s["metrics"], s.get("baseline_metrics", {})
        # label by directory name so the table does not depend on where runs live
        rows.append([Path(p).resolve().parent.name, s.get("seed", ""), m["rms_error"], m["max_error"], m["mean_abs_dhat_error"],
                     b.get("rms_error", ""), b.get("max_error", "")])
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


# --- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpmpc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output_dir)")

    p = sub.add_parser("generate", help="synthesize a training sweep CSV")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sysid", help="fit a0, the linear model and disturbance GPs")
    p.add_argument("data", help="sweep CSV (t,x,y,ux,uy)")
    common(p)
    p.set_defaults(func=cmd_sysid)

    p = sub.add_parser("plan", help="RRT* path through a circular-obstacle world")
    p.add_argument("world", help="world JSON")
    p.add_argument("--start", type=float, nargs=2, required=True, metavar=("X", "Y"))
    p.add_argument("--goal", type=float, nargs=2, required=True, metavar=("X", "Y"))
    common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("track", help="closed-loop GP-MPC tracking")
    p.add_argument("bundle", help="model directory or model.json from sysid")
    p.add_argument("--path", help="path CSV from `plan`; default is the configured scenario")
    p.add_argument("--world", help="world JSON drawn under the xy plot")
    p.add_argument("--baseline", action="store_true", help="also run MPC without the GP")
    p.add_argument("--seeds", help="seed range a..b or list a,b,c; one subdirectory per seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--strict", action="store_true", help="exit 3 if any QP did not converge")
    common(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("report", help="tabulate run summaries")
    p.add_argument("summaries", nargs="+", help="summary.json files")
    p.add_argument("--output", "-o", default="report.csv")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except planner.NoPathFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOPATH
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOPATH
    except (cfglib.ConfigError, sysid.DataError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
