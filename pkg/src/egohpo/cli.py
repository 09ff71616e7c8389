"""Command-line entry point.

Subcommands::

    egohpo design      --config C --out DIR     Latin hypercube design as CSV
    egohpo run         --config C --out DIR     full optimization run
    egohpo sensitivity --config C --history H --out DIR
    egohpo report      --history H --out DIR [--config C | --direction D]
    egohpo schema                               print the config JSON schema
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from egohpo import history_io
from egohpo.benchbox import from_config
from egohpo.config import RUN_CONFIG_SCHEMA, RunConfig, load_config
from egohpo.doe import design_to_raw, lhs_sample
from egohpo.driver import RunHistory, best_so_far, phase_summary, run
from egohpo.errors import ConfigError, DomainError, NumericalError
from egohpo.sensitivity import ablation, anova_sequential, ss_percentages

log = logging.getLogger("egohpo")

HISTORY = "history.csv"
BATCHES = "batches.jsonl"
SUMMARY = "summary.json"
RUN_META = "run.json"


class CliError(Exception):
    pass


def _finite_or_none(v):
    return v if v is None or math.isfinite(v) else None


def _fmt(v):
    return "" if v is None else repr(float(v))


def cmd_design(cfg: RunConfig, out_dir) -> Path:
    space = cfg.space
    design = lhs_sample(space.dim, cfg.plan.n_init, cfg.seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "design.csv"
    lines = [",".join(["eval_id", *space.names])]
    for i, raw in enumerate(design_to_raw(space, design)):
        cells = [str(int(r)) if p.integer else repr(float(r)) for p, r in zip(space.params, raw)]
        lines.append(",".join([str(i), *cells]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _load_resume(cfg: RunConfig, out: Path) -> RunHistory:
    meta_path = out / RUN_META
    if not meta_path.exists():
        raise CliError(f"--resume: no {RUN_META} in {out}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("config_digest") != cfg.digest():
        raise CliError("--resume: config differs from the interrupted run")
    hist_path = out / HISTORY
    if not hist_path.exists():
        return RunHistory(space=cfg.space, direction=cfg.direction, config_digest=cfg.digest())
    history_io.trim_partial_line(hist_path)
    history = history_io.read(hist_path, cfg.space, cfg.direction)
    history.config_digest = cfg.digest()
    records = history_io.read_batch_records(out / BATCHES)
    n = len(history)
    records = [r for r in records if max(r.eval_ids) < n]
    n_init = history.phase_count("init")
    keep = n_init + sum(len(r.eval_ids) for r in records)
    if keep < n:
        # EGO rows whose batch record never reached disk: drop and redo them
        history.observations = history.observations[:keep]
        history_io.write(hist_path, history)
    history.batches = records
    batches_path = out / BATCHES
    batches_path.write_text("", encoding="utf-8")
    for r in records:
        history_io.append_batch_record(batches_path, r)
    return history


def cmd_run(cfg: RunConfig, out_dir, resume=False, parallel=None) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hist_path = out / HISTORY
    if resume:
        history = _load_resume(cfg, out)
    else:
        if hist_path.exists():
            raise CliError(f"{hist_path} exists; pass --resume or choose another --out")
        (out / BATCHES).unlink(missing_ok=True)
        history = RunHistory(space=cfg.space, direction=cfg.direction, config_digest=cfg.digest())
        meta = {"config_digest": cfg.digest(), "config": cfg.data}
        (out / RUN_META).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        history_io.append(hist_path, [], cfg.space)

    def on_batch(hist, new, record):
        history_io.append(hist_path, new, cfg.space)
        if record is not None:
            history_io.append_batch_record(out / BATCHES, record)

    blackbox = from_config(cfg.data["blackbox"], cfg.direction, cfg.base_dir)
    history = run(cfg.space, blackbox, cfg.plan, cfg.driver_config(parallel, on_batch), history)

    summary = build_summary(cfg, history)
    (out / SUMMARY).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def build_summary(cfg: RunConfig, history: RunHistory) -> dict:
    best = history.best()
    try:
        phases = phase_summary(history)
        phases["improvement_fraction"] = _finite_or_none(phases["improvement_fraction"])
    except DomainError:
        phases = None
    return {
        "name": cfg.name,
        "direction": cfg.direction,
        "seed": cfg.seed,
        "config_digest": cfg.digest(),
        "n_evaluations": len(history),
        "n_failed": sum(o.status == "failed" for o in history.observations),
        "best": {"eval_id": best.eval_id, "params": cfg.space.as_dict(best.raw), "response": best.response},
        "phase_summary": phases,
        "refits": [r.to_dict() for r in history.batches],
    }


def cmd_sensitivity(history_path, cfg: RunConfig, out_dir) -> dict:
    space = cfg.space
    history = history_io.read(history_path, space, cfg.direction)
    ok = history.ok()
    if len(ok) < space.dim + 5:
        raise CliError(f"sensitivity needs at least {space.dim + 5} successful rows, got {len(ok)}")
    X = np.array([o.u for o in ok])
    y = np.array([o.response for o in ok])
    if np.ptp(y) == 0:
        raise CliError("responses have zero variance; sensitivity is undefined")
    table = anova_sequential(X, y, space.names)
    pct = ss_percentages(table)
    drops = ablation(X, y, space.names)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "anova.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["factor", "df", "ss", "ms", "f_value", "p_value"])
        for r in table:
            w.writerow([r.factor, r.df, _fmt(r.ss), _fmt(r.ms), _fmt(r.f_value), _fmt(r.p_value)])
    (out / "anova.txt").write_text(table.to_text(), encoding="utf-8")
    with open(out / "ss_percentages.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["factor", "percent", "r2_drop"])
        for name, p in pct.items():
            w.writerow([name, _fmt(p), _fmt(drops.get(name))])
    return {"table": table, "percentages": pct, "ablation": drops}


def _report_rows(history_path):
    text = Path(history_path).read_text(encoding="utf-8")
    rows = list(csv.DictReader(text.splitlines()))
    if not rows:
        raise CliError(f"{history_path} has no observations")
    return rows


def cmd_report(history_path, out_dir, direction="minimize") -> Path:
    """Convergence table in the user's direction, one row per observation."""
    rows = _report_rows(history_path)
    pick = max if direction == "maximize" else min
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "convergence.csv"
    best = None
    lines = ["eval_id,response,best_so_far,phase"]
    for row in rows:
        if row["status"] == "ok" and row["response"] != "":
            r = float(row["response"])
            best = r if best is None else pick(best, r)
        lines.append(",".join([row["eval_id"], row["response"], _fmt(best), row["phase"]]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _direction_for_report(args):
    if args.config:
        return load_config(args.config).direction
    if args.direction:
        return args.direction
    meta = Path(args.history).resolve().parent / RUN_META
    if meta.exists():
        return json.loads(meta.read_text(encoding="utf-8"))["config"]["direction"]
    return "minimize"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="egohpo", description="Kriging/EGO black-box optimization")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="write the initial Latin hypercube design")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("run", help="run initialization and EGO")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", action="store_true", help="continue an interrupted run in --out")
    p.add_argument("--parallel", type=int, help="cap on concurrent evaluations")

    p = sub.add_parser("sensitivity", help="ANOVA of a history file")
    p.add_argument("--config", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="convergence data of a history file")
    p.add_argument("--history", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--direction", choices=["minimize", "maximize"])

    sub.add_parser("schema", help="print the run-config JSON schema")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "schema":
            print(json.dumps(RUN_CONFIG_SCHEMA, indent=2))
        elif args.command == "design":
            print(cmd_design(load_config(args.config, args.seed), args.out))
        elif args.command == "run":
            if args.parallel is not None and args.parallel < 1:
                raise CliError("--parallel must be >= 1")
            summary = cmd_run(load_config(args.config, args.seed), args.out, args.resume, args.parallel)
            print(json.dumps(summary["best"], sort_keys=True))
        elif args.command == "sensitivity":
            res = cmd_sensitivity(args.history, load_config(args.config), args.out)
            print(res["table"].to_text(), end="")
        elif args.command == "report":
            print(cmd_report(args.history, args.out, _direction_for_report(args)))
    except (ConfigError, CliError, history_io.HistoryFormatError) as exc:
        print(f"egohpo: error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, DomainError, OSError) as exc:
        print(f"egohpo: failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
