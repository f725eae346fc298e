"""Command-line interface.

Subcommands: kernel-info, simulate, analytic, verify, report.  Every output
file starts with a provenance header (config hash, seed, version) and runs
are byte-reproducible under a fixed seed.  Exit codes: 0 success / all
checks passed, 1 at least one statistical check failed, 2 usage or config
error.

Seed priority: --seed flag, then the config file, then the FLUXLAB_SEED
environment variable, then fresh entropy (echoed in every header).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, parse_config
from .errors import ConfigParseError, ConfigValidationError, FluxlabError
from .harness import (
    compare_covariance,
    convergence_table,
    projection_normality,
    run_ensemble,
)
from .limit import limit_covariance, initial_covariance, motion_covariance
from .rng import RngStream

_PASS = "PASS"
_FAIL = "FAIL"


def _resolve_seed(args, config: ExperimentConfig) -> int:
    if args.seed is not None:
        return int(args.seed)
    if config.seed is not None:
        return config.seed
    env = os.environ.get("FLUXLAB_SEED")
    if env is not None:
        return int(env)
    return secrets.randbits(63)


def _provenance_lines(config: ExperimentConfig, seed: int) -> list[str]:
    return [
        f"# fluxlab {__version__}",
        f"# config_hash: {config.digest(seed)}",
        f"# seed: {seed}",
    ]


def _open_out(args, config: ExperimentConfig, name: str) -> Path:
    out_dir = Path(args.out or config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / name


def _cmd_kernel_info(args, config: ExperimentConfig, seed: int) -> int:
    k = config.kernel
    print(f"dimension: {k.dimension}")
    print("jumps:")
    for mv, p in zip(k.moves, k.probabilities):
        print(f"  {mv.tolist()}  prob {p:.12g}")
    print(f"drift v: {k.drift.tolist()}")
    print("second moment a:")
    for row in k.second_moment:
        print(f"  {row.tolist()}")
    print("factor kappa (kappa kappa^T = a):")
    for row in k.factor:
        print(f"  {row.tolist()}")
    print(f"initial law: {config.law.kind} mean={config.law.mean:.12g} variance={config.law.variance:.12g}")
    return 0


def _cmd_simulate(args, config: ExperimentConfig, seed: int) -> int:
    replicas = args.replicas or config.replicas
    processes = args.threads or config.processes
    for n in config.n_values:
        plan = config.plan(n, seed)
        result = run_ensemble(plan, replicas, processes=processes)
        path = _open_out(args, config, f"current_n{n}.jsonl")
        with path.open("w") as fh:
            header = {
                "schema": "fluxlab.current.v1",
                "version": __version__,
                "config_hash": config.digest(seed),
                "seed": seed,
                "plan": plan.canonical_dict(),
            }
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for r in range(result.replicas):
                for k, t in enumerate(plan.grid):
                    for f, fid in enumerate(plan.function_ids):
                        rec = {"replica": r, "t": float(t), "phi_id": fid,
                               "value": float(result.values[r, k, f])}
                        fh.write(json.dumps(rec, sort_keys=True) + "\n")
        print(f"wrote {path} ({result.replicas} replicas)")
    return 0


def _cmd_analytic(args, config: ExperimentConfig, seed: int) -> int:
    spec = config.limit_spec()
    a = spec.second_moment
    path = _open_out(args, config, "analytic.csv")
    times = [0.0] + [float(t) for t in config.grid]
    with path.open("w", newline="") as fh:
        for line in _provenance_lines(config, seed):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["s", "t", "phi_id", "psi_id", "sigma1", "sigma2", "cov"])
        for i, (fid, fn) in enumerate(config.functions):
            for gid, gn in list(config.functions)[i:]:
                for si, s in enumerate(times):
                    for t in times[si:]:
                        s1 = motion_covariance(s, fn, t, gn, a)
                        s2 = initial_covariance(s, fn, t, gn, a)
                        cov = spec.mean_density * s1 + spec.occupancy_variance * s2
                        writer.writerow([s, t, fid, gid,
                                         f"{s1:.12g}", f"{s2:.12g}", f"{cov:.12g}"])
    print(f"wrote {path}")
    return 0


def _cmd_verify(args, config: ExperimentConfig, seed: int) -> int:
    replicas = args.replicas or config.replicas
    processes = args.threads or config.processes
    spec = config.limit_spec()
    checks: list[tuple[str, bool, str]] = []
    path = _open_out(args, config, "verify_report.txt")
    csv_path = _open_out(args, config, "verify.csv")
    rows_out = []

    for n in config.n_values:
        plan = config.plan(n, seed)
        result = run_ensemble(plan, replicas, processes=processes)

        zero_start = bool(np.all(result.values[:, 0, :] == 0.0))
        checks.append((f"n={n} current vanishes at t=0", zero_start,
                       "exact" if zero_start else "violated"))

        report = compare_covariance(result, spec)
        checks.append((f"n={n} covariance |z| <= 3 over {len(report.rows)} pairs",
                       report.passed, f"max |z| = {report.max_abs_z:.2f}"))
        for row in report.rows:
            rows_out.append([n, row.s, row.t, row.phi_id, row.psi_id,
                             f"{row.empirical:.8g}", f"{row.analytic:.8g}",
                             f"{row.se:.3g}", f"{row.z:.3f}", int(row.flagged)])

        thetas = list(config.thetas)
        # default combinations: unit vectors on the last grid time, plus one
        # dense vector drawn from the run seed
        if not thetas:
            t_last = float(plan.grid[-1])
            for fid, _ in config.functions:
                thetas.append({"coords": [(t_last, fid)], "weights": [1.0]})
            gen = RngStream(seed, 2 ** 32).generator()
            coords = [(t_last, fid) for fid, _ in config.functions]
            thetas.append({"coords": coords,
                           "weights": gen.standard_normal(len(coords)).tolist()})
        for spec_t in thetas:
            rep = projection_normality(result, spec_t["coords"], spec_t["weights"], spec)
            label = (f"n={n} normality theta={np.round(spec_t['weights'], 3).tolist()} "
                     f"on {spec_t['coords']}")
            checks.append((label, rep.passed(),
                           f"KS p = {rep.ks_p:.4f}, AD p = {rep.ad_p:.4f}"))

    with csv_path.open("w", newline="") as fh:
        for line in _provenance_lines(config, seed):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["n", "s", "t", "phi_id", "psi_id", "empirical", "analytic",
                         "se", "z", "flagged"])
        writer.writerows(rows_out)

    ok = all(passed for _, passed, _ in checks)
    with path.open("w") as fh:
        for line in _provenance_lines(config, seed):
            fh.write(line + "\n")
        for label, passed, detail in checks:
            fh.write(f"[{_PASS if passed else _FAIL}] {label}: {detail}\n")
        fh.write(f"overall: {_PASS if ok else _FAIL}\n")
    for label, passed, detail in checks:
        print(f"[{_PASS if passed else _FAIL}] {label}: {detail}")
    print(f"wrote {path} and {csv_path}")
    return 0 if ok else 1


def _cmd_report(args, config: ExperimentConfig, seed: int) -> int:
    replicas = args.replicas or config.replicas
    processes = args.threads or config.processes
    spec = config.limit_spec()
    plans = config.plans(seed)
    conv = None
    if len(plans) >= 2:
        conv = convergence_table(plans, replicas, processes=processes)
        conv_path = _open_out(args, config, "convergence.csv")
        with conv_path.open("w", newline="") as fh:
            for line in _provenance_lines(config, seed):
                fh.write(line + "\n")
            writer = csv.writer(fh)
            writer.writerow(["n", "max_abs_z", "ks_stat", "ks_p"])
            for row in conv.rows:
                writer.writerow([row.n, f"{row.max_abs_z:.4f}",
                                 f"{row.ks_stat:.6f}", f"{row.ks_p:.6f}"])
        print(f"wrote {conv_path}")

    curves_path = _open_out(args, config, "curves.csv")
    with curves_path.open("w", newline="") as fh:
        for line in _provenance_lines(config, seed):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["n", "t", "phi_id", "empirical_var", "se", "analytic_var",
                         "band_lo", "band_hi"])
        for plan in plans:
            result = run_ensemble(plan, replicas, processes=processes)
            summ = result.summary
            for p in range(summ.mean.size):
                t = float(summ.times[p])
                if t == 0.0:
                    continue
                fid = summ.function_ids[p]
                fn = plan.functions[plan.function_ids.index(fid)]
                analytic = limit_covariance(t, fn, t, fn, spec)
                emp = float(summ.cov[p, p])
                se = float(summ.se_cov[p, p])
                writer.writerow([plan.n, t, fid, f"{emp:.8g}", f"{se:.4g}",
                                 f"{analytic:.8g}", f"{emp - 2 * se:.8g}",
                                 f"{emp + 2 * se:.8g}"])
    print(f"wrote {curves_path}")

    summary_path = _open_out(args, config, "report.txt")
    with summary_path.open("w") as fh:
        for line in _provenance_lines(config, seed):
            fh.write(line + "\n")
        if conv is not None:
            fh.write("ladder (n, max|z|, KS, KS p):\n")
            for row in conv.rows:
                fh.write(f"  {row.n:8d}  {row.max_abs_z:8.3f}  {row.ks_stat:.6f}  {row.ks_p:.4f}\n")
            fh.write(f"KS endpoint improved: {conv.ks_endpoint_improved}\n")
    print(f"wrote {summary_path}")
    return 0


_COMMANDS = {
    "kernel-info": _cmd_kernel_info,
    "simulate": _cmd_simulate,
    "analytic": _cmd_analytic,
    "verify": _cmd_verify,
    "report": _cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluxlab",
                                     description="current-fluctuation laboratory for lattice random walks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML or JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--replicas", type=int, default=None, help="overrides run.replicas")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker processes")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config)
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    seed = _resolve_seed(args, config)
    try:
        return _COMMANDS[args.command](args, config, seed)
    except FluxlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
