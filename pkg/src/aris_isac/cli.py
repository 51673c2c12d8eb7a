"""Command-line harness: ``run`` sweeps, ``validate`` specs, ``oracle`` self-checks."""

from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, replace
import json
import logging
import math
from pathlib import Path
import sys
import time

import numpy as np

from .bcd import BcdOptions, Mode, initialize, mode_config, optimize
from .config import ExperimentSpec, SpecError, dump_resolved, load_spec
from .model import (InfeasibleError, lin_to_db, radar_snr, ris_reflect_power, user_sinrs,
                    validate_solution)
from .channels import synth_channels

log = logging.getLogger("aris_isac")

COLUMNS = ("mode", "sweep_param", "sweep_value", "seed", "gamma_r_db", "min_sinr_margin_db",
           "bs_power_used_w", "ris_power_used_w", "outer_iters", "status", "wall_ms")

STATUS_OK = "ok"
STATUS_MAX_OUTER = "max_outer"
STATUS_INFEASIBLE = "infeasible"
STATUS_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class PointTask:
    spec: ExperimentSpec
    mode: Mode
    value: float
    seed: int

    @property
    def key(self) -> tuple:
        return (list(Mode).index(self.mode), self.value, self.seed)


def tasks_for(spec: ExperimentSpec) -> list[PointTask]:
    return sorted((PointTask(spec, Mode(m), v, s)
                   for m in spec.modes for v in spec.sweep.values for s in spec.seeds()),
                  key=lambda t: t.key)


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.9g" % float(x)


def run_point(task: PointTask) -> dict:
    """Solve one (mode, sweep value, seed) point; failures become a status, not an exception."""
    spec = task.spec
    t0 = time.perf_counter()
    row = {"mode": task.mode.value, "sweep_param": spec.sweep.parameter, "sweep_value": task.value,
           "seed": task.seed, "gamma_r_db": math.nan, "min_sinr_margin_db": math.nan,
           "bs_power_used_w": math.nan, "ris_power_used_w": math.nan, "outer_iters": 0}
    try:
        cfg = spec.point_scenario(task.value).system_config()
        ch = synth_channels(cfg, spec.geometry.geometry(task.seed))
        opts = BcdOptions(max_outer=spec.solver.max_outer, rel_tol=spec.solver.rel_tol, seed=task.seed,
                          mode=task.mode).with_backend(spec.solver.backend)
        sol = optimize(cfg, ch, opts)
        cfg_m = sol.diagnostics["config"]
        feasible = validate_solution(cfg_m, ch, sol, tol=1e-6).feasible
        # margins against the scenario's targets, also for the radar-only mode
        sinr = user_sinrs(cfg_m, ch, sol.w_mat, sol.phi)
        with np.errstate(divide="ignore"):
            margin = float(np.min(lin_to_db(sinr) - lin_to_db(cfg.gamma_targets)))
        ris_p = ris_reflect_power(cfg_m, ch, sol.w_mat, sol.phi)
        row.update(gamma_r_db=float(lin_to_db(sol.radar_snr)), min_sinr_margin_db=margin,
                   bs_power_used_w=float(np.linalg.norm(sol.w_mat) ** 2), ris_power_used_w=ris_p,
                   outer_iters=sol.diagnostics["outer_iters"])
        if not feasible:
            status = STATUS_FAILURE
        else:
            status = STATUS_OK if sol.converged else STATUS_MAX_OUTER
    except InfeasibleError as exc:
        log.info("point %s: infeasible (%s)", task.key, exc)
        status = STATUS_INFEASIBLE
    except (np.linalg.LinAlgError, FloatingPointError, ValueError, ArithmeticError) as exc:
        log.warning("point %s: numerical failure (%s)", task.key, exc)
        status = STATUS_FAILURE
    row["status"] = status
    row["wall_ms"] = 1000.0 * (time.perf_counter() - t0)
    return row


def run(spec: ExperimentSpec, out: str | Path | None = None, jobs: int = 1) -> list[dict]:
    """Run every sweep point and write the CSV; rows come back in sorted order."""
    tasks = tasks_for(spec)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_point, tasks))
    else:
        rows = [run_point(t) for t in tasks]
    path = Path(out if out is not None else spec.output)
    write_csv(rows, path)
    return rows


def write_csv(rows: list[dict], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in COLUMNS])


def validate(spec: ExperimentSpec) -> dict:
    """Resolved spec plus a feasibility pre-check of every (mode, value, seed) scenario."""
    checks = []
    for task in tasks_for(spec):
        cfg = mode_config(spec.point_scenario(task.value).system_config(), task.mode)
        ch = synth_channels(cfg, spec.geometry.geometry(task.seed))
        try:
            initialize(cfg, ch, task.seed, backend=spec.solver.backend)
            checks.append({"mode": task.mode.value, "value": task.value, "seed": task.seed,
                           "feasible": True})
        except InfeasibleError as exc:
            checks.append({"mode": task.mode.value, "value": task.value, "seed": task.seed,
                           "feasible": False, "reason": str(exc)})
    return {"ok": all(c["feasible"] for c in checks), "checks": checks}


def oracle_suite(spec: ExperimentSpec, n_samples: int = 200_000) -> dict:
    """Oracle checks on the first sweep point: Monte-Carlo metrics, surrogate chain, local perturbations."""
    from . import oracle
    from .reflection import build_phi_data, build_surrogate

    seed = spec.seeds()[0]
    cfg = spec.point_scenario(spec.sweep.values[0]).system_config()
    ch = synth_channels(cfg, spec.geometry.geometry(seed))
    sol = optimize(cfg, ch, BcdOptions(seed=seed, max_outer=spec.solver.max_outer,
                                       rel_tol=spec.solver.rel_tol).with_backend(spec.solver.backend))
    w, phi, u = sol.w_mat, sol.phi, sol.u
    mc = oracle.McConfig(n_samples=n_samples, seed=seed)
    report = {"mc": {}, "surrogate": {}, "certificate": {}}
    sinr = user_sinrs(cfg, ch, w, phi)
    for k in range(cfg.n_users):
        est = oracle.mc_user_sinr(cfg, ch, w, phi, k, mc)
        report["mc"][f"user_sinr_{k}"] = _mc_entry(est, sinr[k])
    report["mc"]["radar_snr"] = _mc_entry(oracle.mc_radar_snr(cfg, ch, w, phi, u, mc),
                                          radar_snr(cfg, ch, w, phi, u))
    report["mc"]["ris_power"] = _mc_entry(oracle.mc_ris_power(cfg, ch, w, phi, mc),
                                          ris_reflect_power(cfg, ch, w, phi))
    if cfg.n_ris <= 8:
        data = build_phi_data(cfg, ch, w, u)
        varpi = data.ratio(phi)
        sur = build_surrogate(data, varpi, phi, cfg)
        rng = np.random.default_rng(seed)
        pts = oracle.random_box_points(rng, cfg.n_ris, cfg.a_max, 200)
        sl = oracle.surrogate_chain_slacks(cfg, ch, w, u, phi, varpi, pts, surrogate=sur)
        report["surrogate"] = {k: float(v) for k, v in sl.items() if np.isscalar(v)}
    else:
        report["surrogate"] = {"skipped": "dense operators limited to n_ris <= 8"}
    cert = oracle.local_opt_certificate(cfg, ch, sol, n_perturb=200, seed=seed)
    report["certificate"] = {"improving_fraction": cert.improving_fraction,
                             "best_gain": cert.best_gain, "mean_shrink": cert.mean_shrink}
    return report


def _mc_entry(est, exact: float) -> dict:
    return {"closed_form": float(exact), "mc": est.value, "se": est.se,
            "z": (est.value - exact) / est.se if est.se > 0 else 0.0, "agrees": bool(est.agrees(exact))}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed (overrides the spec)")
    common.add_argument("--out", default=None, help="output path (overrides the spec)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="aris-isac", parents=[common],
                                description="Active-RIS ISAC beamforming experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run the sweep and write a CSV")
    r.add_argument("spec")
    r.add_argument("--strict", action="store_true",
                   help="exit non-zero if any point ends in a numerical failure")
    v = sub.add_parser("validate", parents=[common], help="check a spec and dump resolved defaults")
    v.add_argument("spec")
    v.add_argument("--no-feasibility", action="store_true", help="schema check only")
    o = sub.add_parser("oracle", parents=[common], help="run oracle checks on the first sweep point")
    o.add_argument("spec")
    o.add_argument("--samples", type=int, default=200_000)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = load_spec(args.spec)
    except SpecError as exc:
        print(f"{args.spec}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read {args.spec}: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.command == "run":
        rows = run(spec, args.out, jobs=max(1, args.jobs))
        counts: dict[str, int] = {}
        for row in rows:
            counts[row["status"]] = counts.get(row["status"], 0) + 1
        print(f"wrote {len(rows)} rows to {args.out or spec.output} "
              + " ".join(f"{k}={v}" for k, v in sorted(counts.items())))
        if args.strict and counts.get(STATUS_FAILURE, 0):
            return 1
        return 0
    if args.command == "validate":
        text = dump_resolved(spec)
        ok = True
        if not args.no_feasibility:
            rep = validate(spec)
            ok = rep["ok"]
            for c in rep["checks"]:
                if not c["feasible"]:
                    print(f"infeasible: mode={c['mode']} value={c['value']} seed={c['seed']}: "
                          f"{c['reason']}", file=sys.stderr)
        _emit(text, args.out)
        return 0 if ok else 1
    report = oracle_suite(spec, n_samples=args.samples)
    _emit(json.dumps(report, indent=2, sort_keys=True), args.out)
    return 0


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


if __name__ == "__main__":
    sys.exit(main())
