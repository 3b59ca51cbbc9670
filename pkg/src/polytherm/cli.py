"""Command line entry point: run, check, study and energy-report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as d
from .config import ConfigError, RunConfig, parse_config
from .march import Trajectory, checkpoint_load, checkpoint_save, tail
from .selfcheck import format_table, run_suite
from .constitutive import make_model

log = logging.getLogger("polytherm")

CURL_REL_TOL = 1e-12
ENTROPY_TOL = 1e-13


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


SOLVER_HEADER = ("step", "t", "newton_iters", "cg_iters", "grad_norm", "grad_tol", "el_residual", "el_gap",
                 "eta_min", "tol_d")


def solver_rows(traj: Trajectory, kappa: float):
    for k, r in enumerate(traj.reports, start=1):
        yield (k, k * traj.h, r.newton_iters, r.cg_iters_total, r.grad_norm_final, r.grad_tol,
               r.el_residual, r.el_gap, r.eta_min, d.tol_d(r, kappa))


def write_ledgers(traj: Trajectory, out: Path, kappa: float, c: float | None) -> d.DriftLedger | None:
    write_csv(out / "energy.csv", d.EnergyLedger.HEADER, d.energy_ledger(traj, c).rows())
    write_csv(out / "solver.csv", SOLVER_HEADER, solver_rows(traj, kappa))
    drift = d.drift_ledger(traj) if traj.first_step == 0 else None
    if drift is not None:
        write_csv(out / "drift.csv", d.DriftLedger.HEADER, drift.rows())
    return drift


def certificates(traj: Trajectory, drift: d.DriftLedger, cfg: RunConfig) -> list[tuple]:
    """(name, value, tolerance, passed) for everything a run is judged on."""
    model = traj.model
    out = []
    if traj.reports:
        c = cfg.lemma_constant(model)
        cert = d.dissipation_certificate(traj, c=c, kappa=cfg.diagnostics["kappa"])
        worst_e = float(np.max(cert.energy_change - cert.tolerances))
        out.append(("energy_balance", worst_e, 0.0, bool(np.all(cert.energy_ok))))
        out.append((f"dissipation_lemma(c={c:.6g})", cert.worst_margin, 0.0, bool(np.all(cert.lemma_ok))))
        ub = d.uniform_bound(traj)
        out.append(("uniform_energy_bound", ub["lhs"], ub["E"], ub["passed"]))
    out.append(("curl_relative", float(np.max(drift.curl_rel)), CURL_REL_TOL,
                bool(np.all(drift.curl_rel <= CURL_REL_TOL))))
    out.append(("feasibility", float(np.max(drift.feasibility)), 0.0, bool(np.all(drift.feasibility == 0))))
    out.append(("entropy_identity", float(np.max(drift.entropy_identity)), ENTROPY_TOL,
                bool(np.all(drift.entropy_identity <= ENTROPY_TOL))))
    out.append(("completed", float(traj.nsteps), float(cfg.nsteps), traj.failure is None))
    return out


def _print_certs(rows, stream=sys.stdout):
    w = max(len(r[0]) for r in rows)
    for name, val, tol, ok in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{w}}  value={val:.6e}  limit={tol:.6e}", file=stream)


def cmd_run(cfg: RunConfig, out: Path, workers: int = 1) -> int:
    from .study import simulate

    out.mkdir(parents=True, exist_ok=True)
    traj = simulate(cfg)
    drift = write_ledgers(traj, out, cfg.diagnostics["kappa"], cfg.lemma_constant(traj.model))
    checkpoint_save(traj if cfg.checkpoint == "full" else tail(traj), out / "final.ckpt")
    certs = certificates(traj, drift, cfg)
    write_csv(out / "certificates.csv", ("certificate", "value", "limit", "verdict"),
              [(n, v, t, "PASS" if ok else "FAIL") for n, v, t, ok in certs])
    _print_certs(certs)
    if traj.failure is not None:
        record = {"failed_step": traj.nsteps + 1, "t_start": traj.T, "message": traj.failure,
                  "completed_steps": traj.nsteps}
        (out / "failure.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
        print(f"step failure: {traj.failure}", file=sys.stderr)
        return 2
    return 0 if all(c[3] for c in certs) else 1


def cmd_check(model_name: str, seed: int, params: dict | None = None) -> int:
    rows = run_suite(make_model(model_name, **(params or {})), seed=seed)
    print(format_table(rows))
    failed = [r.name for r in rows if not r.passed]
    if failed:
        print("FAILED: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def cmd_study(cfg: RunConfig, out: Path, workers: int = 1) -> int:
    from .study import STUDY_HEADER, run_study

    out.mkdir(parents=True, exist_ok=True)
    res = run_study(cfg, workers)
    rows = res.rows()
    write_csv(out / "study.csv", STUDY_HEADER, rows)
    summary = [
        ("drift_order_cof", res.drift.cof_order, res.drift.threshold, res.drift.cof_order >= res.drift.threshold),
        ("drift_order_det", res.drift.det_order, res.drift.threshold, res.drift.det_order >= res.drift.threshold),
        ("relative_entropy_order", res.relent.order, res.relent.threshold, res.relent.order >= res.relent.threshold),
        ("gronwall_envelope", max(f.C1 for f in res.relent.fits), float("nan"), all(f.under for f in res.relent.fits)),
        ("piola_order", res.piola["order"], res.piola["threshold"], res.piola["passed"]),
        ("interpolant_gap", res.gap["gap"], res.gap["bound"], res.gap["gap"] <= res.gap["bound"]),
    ]
    w = max(len(s[0]) for s in summary)
    for name, val, thr, ok in summary:
        shown = d.format_order(val) if "order" in name else f"{val:.6e}"
        limit = "n/a" if np.isnan(thr) else f"{thr:.4g}"
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{w}}  {shown}  (limit {limit})")
    return 0 if res.passed else 1


def cmd_energy_report(path: Path, out: Path, kappa: float = d.KAPPA, c: float | None = None) -> int:
    traj = checkpoint_load(path)
    if c is None:
        c = min(1.0, traj.model.c_e) / 2  # same default as [diagnostics] lemma_c = sharp
    out.mkdir(parents=True, exist_ok=True)
    write_ledgers(traj, out, kappa, c)
    if traj.first_step != 0:
        print("checkpoint holds a restart tail: drift.csv needs every state and was not written", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polytherm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required):
        sp.add_argument("--config", type=Path, required=config_required, help="run configuration file")
        sp.add_argument("--out", type=Path, default=None, help="output directory (overrides [output] dir)")
        sp.add_argument("--workers", type=int, default=1, help="worker processes")
        sp.add_argument("--seed", type=int, default=0, help="seed for randomized suites")

    common(sub.add_parser("run", help="march one configuration and certify it"), True)
    sp = sub.add_parser("check", help="run the invariant suite")
    common(sp, False)
    sp.add_argument("--model", default=None, help="paper, quadratic or saddle (default: config model or paper)")
    common(sub.add_parser("study", help="h- and dx-refinement study"), True)
    sp = sub.add_parser("energy-report", help="re-emit ledgers from a checkpoint")
    sp.add_argument("checkpoint", type=Path)
    common(sp, False)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(args.config) if args.config is not None else None
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    def outdir():
        if args.out is not None:
            return args.out
        return cfg.out_dir if cfg is not None else Path("out")

    if args.command == "run":
        return cmd_run(cfg, outdir(), args.workers)
    if args.command == "check":
        if args.model is not None:
            return cmd_check(args.model, args.seed)
        if cfg is not None:
            return cmd_check(cfg.model_name, args.seed, cfg.model_params)
        return cmd_check("paper", args.seed)
    if args.command == "study":
        try:
            return cmd_study(cfg, outdir(), args.workers)
        except ValueError as exc:
            print(f"study error: {exc}", file=sys.stderr)
            return 2
    if args.command == "energy-report":
        kappa = cfg.diagnostics["kappa"] if cfg else d.KAPPA
        try:
            traj_model_c = None
            if cfg is not None:
                traj_model_c = cfg.lemma_constant(cfg.make_model())
            return cmd_energy_report(args.checkpoint, outdir(), kappa, traj_model_c)
        except OSError as exc:
            print(f"checkpoint error: {exc}", file=sys.stderr)
            return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
