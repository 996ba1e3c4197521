"""Command line interface.

    kacvortex run CONFIG [--resume]
    kacvortex anneal CONFIG [--schedule FILE] [--warm-start FIELD]
    kacvortex sweep CONFIG [--degrees 1,2,3] [--seeds 1,2] [--jobs N]
    kacvortex mbeta BETA Q
    kacvortex validate RUN_DIR

Exit codes: 0 converged (or success), 2 stopped at t_max, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..dynamics import Schedule
from ..meanfield import MeanFieldModel, f as mf_f, f_beta, solve_m_beta
from . import io
from .config import ConfigError, load_config
from .runner import EXIT_CONVERGED, EXIT_ERROR, EXIT_TMAX, execute, fit_line, validate_run

SUMMARY_COLUMNS = ("d", "seed", "F", "W0", "K", "n_vortices", "conserved", "termination", "error")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_run(args) -> int:
    s = load_config(args.config)
    outcome = execute(s, resume=args.resume, workers=args.workers)
    _print_outcome(outcome.manifest)
    return outcome.exit_code


def cmd_anneal(args) -> int:
    s = load_config(args.config)
    warm = args.warm_start or s.warm_start
    if not warm:
        raise ConfigError("anneal needs a warm-start field (--warm-start or key 'warm_start')")
    if not Path(warm).is_file():
        raise FileNotFoundError(f"warm-start field not found: {warm}")
    if args.schedule:
        schedule = Schedule.load(args.schedule)
    elif s.schedule_file:
        schedule = Schedule.load(s.schedule_file)
    else:
        schedule = Schedule.default(s.beta)
    outcome = execute(s, schedule=schedule, warm_start=warm, workers=args.workers)
    m = outcome.manifest
    print(f"F_before={m['energy_before']:.12g} F_after={m['energy_after']:.12g}")
    _print_outcome(m)
    return outcome.exit_code


def _print_outcome(m: dict) -> None:
    topo = m["topology"]
    print(f"termination={m['termination']} t={m['t_final']:.6g} F={m['final_energy']['total']:.12g} residual={m['final_residual']:.3g}")
    if "error" in topo:
        print(f"topology: {topo['error']}")
    elif topo["kind"] == "vortices":
        print(
            f"vortices={topo['n_vortices']} charges={topo['charges']} boundary_degree={topo['boundary_degree']} "
            f"conserved={str(topo['conserved']).lower()}"
        )
    else:
        print(f"sphere_degree={topo.get('degree')}")


def _sweep_point(job):
    config_path, d, seed, out_dir, workers = job
    row = {"d": d, "seed": seed, "F": "", "W0": "", "K": "", "n_vortices": "", "conserved": "", "termination": "", "error": ""}
    try:
        s = load_config(config_path).with_values(degree=d, seed=seed, out_dir=out_dir)
        m = execute(s, workers=workers).manifest
        topo = m["topology"]
        row.update(F=m["final_energy"]["total"], termination=m["termination"])
        if topo["kind"] == "vortices" and "error" not in topo:
            row.update(W0=topo["W0"], K=topo["K"], n_vortices=topo["n_vortices"], conserved=topo["conserved"])
    except Exception as exc:  # recorded per point; the sweep goes on
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_sweep(args) -> int:
    s = load_config(args.config)
    degrees = _int_list(args.degrees) if args.degrees is not None else [s.degree]
    seeds = _int_list(args.seeds) if args.seeds is not None else [s.seed]
    if not degrees or not seeds:
        print("error: empty sweep", file=sys.stderr)
        return EXIT_ERROR
    base = Path(s.out_dir)
    base.mkdir(parents=True, exist_ok=True)
    jobs = [(args.config, d, seed, str(base / f"d{d}_seed{seed}"), args.workers) for d in degrees for seed in seeds]
    n = args.jobs or os.cpu_count() or 1
    if n == 1:
        rows = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})
    io.atomic_write_text(base / "summary.csv", buf.getvalue())
    print(buf.getvalue(), end="")
    good = [r for r in rows if not r["error"] and r["K"] != ""]
    report = {"points": len(rows), "failed": len(rows) - len(good)}
    if len({r["d"] for r in good}) >= 2:
        report["fit"] = fit_line([r["d"] for r in good], [r["K"] for r in good])
        fit = report["fit"]
        print(
            f"fit: K = {fit['slope']:.6g} d + {fit['intercept']:.6g}, residual_norm={fit['residual_norm']:.6g}, "
            f"K_range={fit['K_range']:.6g}"
        )
    spread = {}
    for r in good:
        spread.setdefault(r["d"], []).append(r["K"])
    report["K_spread"] = {str(d): max(v) - min(v) for d, v in spread.items()}
    io.write_manifest(base / "sweep.json", report)
    if report["failed"]:
        return EXIT_ERROR
    if any(r["termination"] == "t_max" for r in rows):
        return EXIT_TMAX
    return EXIT_CONVERGED


def cmd_mbeta(args) -> int:
    model = MeanFieldModel(args.q, args.beta)
    m = solve_m_beta(model)
    residual = abs(m - mf_f(model.beta * m, model.q))
    print(f"m_beta={m:.12g} f_beta={f_beta(m, model):.12g} residual={residual:.3g}")
    return EXIT_CONVERGED


def cmd_validate(args) -> int:
    problems = validate_run(args.run_dir)
    for p in problems:
        print(f"invalid: {p}")
    if not problems:
        print("valid")
    return EXIT_ERROR if problems else EXIT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kacvortex", description="Kac-model vortex relaxation")
    parser.add_argument("--workers", type=int, default=None, help="threads per run (default: $KACVORTEX_WORKERS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="relax one configuration")
    p.add_argument("config")
    p.add_argument("--resume", action="store_true", help="continue from out_dir/checkpoint.npz")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("anneal", help="annealed relaxation from a warm-start field")
    p.add_argument("config")
    p.add_argument("--schedule", help="file of 't beta' lines")
    p.add_argument("--warm-start", help="field dump supplying the initial interior")
    p.set_defaults(func=cmd_anneal)

    p = sub.add_parser("sweep", help="run a grid of degrees and seeds")
    p.add_argument("config")
    p.add_argument("--degrees", help="comma-separated degrees")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--jobs", type=int, default=None, help="parallel points (default: CPU count)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mbeta", help="print the spontaneous magnetization")
    p.add_argument("beta", type=float)
    p.add_argument("q", type=int)
    p.set_defaults(func=cmd_mbeta)

    p = sub.add_parser("validate", help="check a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
