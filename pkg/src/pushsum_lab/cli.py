"""Command-line runner: ``pushsum-lab run | verify | sweep``.

Exit codes: 0 success, 1 a verification check failed, 2 bad configuration,
3 numeric failure during a run.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .algorithms import AssumptionError, OptimizerKind, run_experiment
from .analysis import PreconditionError, VerificationReport, verify_identities, verify_lemma1, verify_lemma2, verify_theorem1
from .config import ConfigError, ExperimentConfig, load_config, load_sweep
from .protocol import NumericalError

__all__ = ["main", "cmd_run", "cmd_verify", "cmd_sweep", "CHECKS", "SWEEP_FIELDS"]

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
CHECKS = ("lemma1", "lemma2", "theorem1", "identities")
SWEEP_FIELDS = (
    "run", "seed", "status", "final_loss", "final_grad_norm_sq", "mean_consensus_l1", "total_scalars_sent", "error",
)


def _err(msg):
    print(f"pushsum-lab: {msg}", file=sys.stderr)


def _execute(cfg: ExperimentConfig, trace=False, weight_hook=None):
    problem = cfg.build_problem()
    return run_experiment(
        problem,
        cfg.graph_spec(),
        cfg.optimizer_spec(),
        cfg.weighting_method(),
        cfg.horizon_t,
        cfg.seed,
        trace=trace,
        dump_state=cfg.dump_state,
        weight_hook=weight_hook,
    )


def _write_outputs(cfg: ExperimentConfig, log, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    log.to_csv(out / "metrics.csv")
    summary = {"config": cfg.to_dict(), **log.summary()}
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    if log.state_dump is not None:
        with open(out / "state.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t", "node", "a", "x_norm", "cons_l1", "cons_l2"))
            w.writerows([t, i, *(repr(v) for v in rest)] for t, i, *rest in log.state_dump)


def _load(path, out):
    cfg = load_config(path)
    if out is not None:
        cfg.output_path = str(out)
    return cfg


def cmd_run(config_path, out=None) -> int:
    try:
        cfg = _load(config_path, out)
        log = _execute(cfg)
    except (ConfigError, AssumptionError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except NumericalError as exc:
        _err(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    _write_outputs(cfg, log, Path(cfg.output_path))
    print(f"wrote {cfg.output_path}/metrics.csv ({len(log.records)} rows)")
    return EXIT_OK


def cmd_verify(config_path, checks=CHECKS, out=None, weight_hook=None) -> int:
    """Run with a full trace and apply the requested verifiers.

    A sequence that breaks a check's own preconditions (for instance a
    corrupted weight matrix) counts as a failed check, not a crash.
    """
    checks = tuple(checks)
    unknown = set(checks) - set(CHECKS)
    try:
        if unknown:
            raise ConfigError(f"unknown check(s) {sorted(unknown)}; choose from {', '.join(CHECKS)}")
        cfg = _load(config_path, out)
        opt = cfg.optimizer_spec()
        if opt.kind is OptimizerKind.SADDOPT and {"theorem1", "identities"} & set(checks):
            raise ConfigError("theorem1 and identities apply to perturbation-form optimisers, not SADDOPT")
        log = _execute(cfg, trace=True, weight_hook=weight_hook)
    except (ConfigError, AssumptionError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except NumericalError as exc:
        _err(f"numeric failure: {exc}")
        return EXIT_NUMERIC

    tr, params = log.trace, log.bounds
    beta = opt.beta if opt.kind.momentum else 0.0
    runners = {
        "lemma1": lambda: [verify_lemma1(tr.weights, params)],
        "lemma2": lambda: [verify_lemma2(tr.weights, params)],
        "theorem1": lambda: [verify_theorem1(tr, params, "L1"), verify_theorem1(tr, params, "L2")],
        "identities": lambda: [verify_identities(tr, opt.gamma, beta)],
    }
    reports = []
    for name in checks:
        try:
            reports.extend(runners[name]())
        except PreconditionError as exc:
            reports.append(VerificationReport(name, False, float("-inf"), None, {"precondition": str(exc)}))

    out_dir = Path(cfg.output_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"config": cfg.to_dict(), "reports": [r.to_dict() for r in reports]}
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False)
    (out_dir / "verification.json").write_text(text + "\n")
    ok = all(r.passed for r in reports)
    for r in reports:
        print(f"{r.check:14s} {'PASS' if r.passed else 'FAIL'}  worst margin {r.worst_margin:.3e}")
    return EXIT_OK if ok else EXIT_VERIFY


def _jsonable(obj):
    """Strict JSON: non-finite floats become strings (-inf marks a check that could not run)."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _sweep_child(args):
    index, cfg_dict, out_dir = args
    from .config import _from_dict

    cfg = _from_dict(cfg_dict)
    row = {"run": index, "seed": cfg.seed}
    try:
        log = _execute(cfg)
    except (AssumptionError, NumericalError, ValueError) as exc:
        return {**row, "status": "error", "error": f"{type(exc).__name__}: {exc}"}
    _write_outputs(cfg, log, Path(out_dir))
    s = log.summary()
    return {
        **row,
        "status": "ok",
        "final_loss": repr(s["final_loss"]),
        "final_grad_norm_sq": repr(s["final_grad_norm_sq"]),
        "mean_consensus_l1": repr(s["mean_cons_l1"]),
        "total_scalars_sent": s["total_scalars_sent"],
        "error": "",
    }


def cmd_sweep(sweep_path, jobs=None, out=None) -> int:
    try:
        sweep = load_sweep(sweep_path)
        runs = list(sweep.runs())
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    root = Path(out if out is not None else sweep.base.get("output_path", "runs/sweep"))
    tasks = [(k, cfg.to_dict(), str(root / f"run_{k:04d}")) for k, (_, cfg) in enumerate(runs)]
    jobs = jobs or os.cpu_count() or 1
    if jobs == 1 or len(tasks) == 1:
        rows = [_sweep_child(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_child, tasks))

    axes = list(sweep.axes)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=[*axes, *SWEEP_FIELDS], lineterminator="\n", restval="")
        w.writeheader()
        for (values, _), row in zip(runs, rows):
            w.writerow({**values, **row})
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"wrote {root}/sweep.csv ({len(rows)} runs, {failed} failed)")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def _parser():
    p = argparse.ArgumentParser(prog="pushsum-lab", description="Push-sum consensus optimisation experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output_path)")
    v = sub.add_parser("verify", help="run one experiment and check the consensus theory on it")
    v.add_argument("config")
    v.add_argument("--checks", default=",".join(CHECKS), help="comma-separated subset of " + ",".join(CHECKS))
    v.add_argument("--out")
    s = sub.add_parser("sweep", help="run a cartesian grid of experiments")
    s.add_argument("sweep")
    s.add_argument("--jobs", type=int, default=None, help="worker processes (default: all CPUs)")
    s.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out)
    if args.command == "verify":
        checks = [c.strip() for c in args.checks.split(",") if c.strip()]
        return cmd_verify(args.config, checks, args.out)
    if args.jobs is not None and args.jobs < 1:
        _err("--jobs must be >= 1")
        return EXIT_CONFIG
    return cmd_sweep(args.sweep, args.jobs, args.out)


if __name__ == "__main__":
    sys.exit(main())
