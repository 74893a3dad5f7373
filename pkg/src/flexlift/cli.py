"""Command-line front end: ``run``, ``compare`` and ``validate``.

Exit codes: 0 success, 2 configuration error, 3 I/O or report-format
error, 4 a controller failed its task, 5 a validation property failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .config import METHODS, deep_merge, dump_config, load_config, parse_assignment
from .errors import ConfigError, SchemaMismatch, SolverFailure
from .sim import SCHEMA_VERSION, _atomic_write, run_batch, write_json, write_trial_csv
from .trajectory import KIND_TO_NAME, SCENARIOS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TASK = 4
EXIT_PROPERTY = 5

OUTPUT_ENV = "FLEXLIFT_OUTPUT_ROOT"
PID_METHODS = ("pid-low", "pid-high")

log = logging.getLogger("flexlift")


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def _overrides(args) -> dict:
    over: dict = {}
    for text in args.set or []:
        over = deep_merge(over, parse_assignment(text))
    if args.method:
        over["methods"] = list(args.method)
    if args.trials is not None:
        over["trials"] = args.trials
    if args.seed is not None:
        over["seed"] = args.seed
    if args.duration is not None:
        over["duration"] = args.duration
    return over


def _load(target: str, over: dict):
    """``target`` is a YAML file or a scenario name."""
    if Path(target).suffix in (".yaml", ".yml") or Path(target).is_file():
        return load_config(target, over), str(Path(target).resolve())
    name = KIND_TO_NAME.get(target, target)
    if name not in SCENARIOS:
        raise ConfigError("scenario", f"{target!r} is neither a config file nor a scenario ({sorted(SCENARIOS)})")
    return load_config(None, deep_merge({"scenario": {"name": name}}, over)), None


def _summary_rows(summary: dict) -> list:
    rows = []
    for t in summary["trials"]:
        rows.append({"scenario": t["scenario"], "method": t["method"], "trial": t["trial"],
                     "mean_error": t["mean_error"], "std_error": t["std_error"],
                     "success": int(bool(t["success"])), "failure": t["failure"]})
    return rows


def _write_rows(path: Path, rows: list, fields: list):
    def w(fh):
        out = csv.DictWriter(fh, fieldnames=fields)
        out.writeheader()
        for r in rows:
            out.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    _atomic_write(str(path), w)


def _print_table(rows: list, fields: list, stream=None):
    stream = stream or sys.stdout
    widths = {f: max(len(f), *(len(_fmt(r[f])) for r in rows)) if rows else len(f) for f in fields}
    stream.write("  ".join(f.ljust(widths[f]) for f in fields) + "\n")
    for r in rows:
        stream.write("  ".join(_fmt(r[f]).ljust(widths[f]) for f in fields) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def cmd_run(args) -> int:
    cfg, cfg_path = _load(args.target, _overrides(args))
    out = Path(args.out) if args.out else output_root() / f"{cfg.scenario.name}-seed{cfg['seed']}"
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "trials").mkdir(exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", out, exc)
        return EXIT_IO
    batch = run_batch(cfg, jobs=args.jobs)
    summary = batch.summary()
    try:
        for method, reps in batch.trials.items():
            for rep in reps:
                stem = f"{rep.scenario}_{method}_{rep.trial}"
                write_trial_csv(rep, str(out / "trials" / f"{stem}.csv"))
                write_json(rep.to_json(), str(out / "trials" / f"{stem}.json"))
        write_json(summary, str(out / "summary.json"))
        _write_rows(out / "summary.csv", _summary_rows(summary),
                    ["scenario", "method", "trial", "mean_error", "std_error", "success", "failure"])
        snapshot = cfg.snapshot()
        _atomic_write(str(out / "config.yaml"), lambda fh: fh.write(dump_config(snapshot)))
        write_json({"schema_version": SCHEMA_VERSION, "tool_version": __version__, "config_path": cfg_path,
                    "output_dir": str(out.resolve()), "seed": cfg["seed"], "config": snapshot},
                   str(out / "manifest.json"))
    except OSError as exc:
        log.error("writing outputs failed: %s", exc)
        return EXIT_IO

    rows = _summary_rows(summary)
    _print_table(rows, ["method", "trial", "mean_error", "std_error", "success"])
    failed = [r for r in rows if not r["success"]]
    for r in failed:
        print(f"task failure: {r['method']} trial {r['trial']}: {r['failure']}")
    print(f"outputs in {out}")
    return EXIT_TASK if failed else EXIT_OK


def load_summary(directory: str) -> dict:
    path = Path(directory) / "summary.json"
    with open(path) as fh:
        data = json.load(fh)
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaMismatch(f"{path}: schema {version!r}, this tool writes {SCHEMA_VERSION!r}")
    return data


def compare_rows(summaries: list, labels: list, baseline: Optional[str] = None) -> list:
    """Long-format rows ``(label, method, trial, mean, std, ratio)``.

    The ratio divides each trial mean by the baseline series' mean for the
    same trial (or its last trial when shorter). The baseline defaults to the
    first PID series of the first report, else its first series.
    """
    series = []
    for label, s in zip(labels, summaries):
        for method, m in s["methods"].items():
            series.append((label, method, m["trial_means"], m["trial_stds"]))
    if not series:
        raise ValueError("no series to compare")
    base = None
    if baseline is not None:
        base = next((x for x in series if x[1] == baseline or f"{x[0]}:{x[1]}" == baseline), None)
        if base is None:
            raise ValueError(f"baseline {baseline!r} not found")
    else:
        first = [x for x in series if x[0] == labels[0]]
        base = next((x for x in first if x[1] in PID_METHODS), first[0])
    rows = []
    for label, method, means, stds in series:
        for k, (mu, sd) in enumerate(zip(means, stds)):
            ref = base[2][min(k, len(base[2]) - 1)]
            rows.append({"report": label, "method": method, "trial": k, "mean_error": mu, "std_error": sd,
                         "ratio": mu / ref if ref > 0 else float("nan")})
    return rows


def cmd_compare(args) -> int:
    if len(args.reports) < 2:
        log.error("compare needs at least two report directories")
        return EXIT_CONFIG
    try:
        summaries = [load_summary(d) for d in args.reports]
    except SchemaMismatch as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (OSError, ValueError) as exc:
        log.error("cannot read report: %s", exc)
        return EXIT_IO
    labels = []
    for d in args.reports:
        name = Path(d).name or str(d)
        labels.append(name if name not in labels else f"{name}#{len(labels)}")
    try:
        rows = compare_rows(summaries, labels, args.baseline)
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    fields = ["report", "method", "trial", "mean_error", "std_error", "ratio"]
    _print_table(rows, fields)
    if args.out:
        try:
            _write_rows(Path(args.out), rows, fields)
        except OSError as exc:
            log.error("cannot write %s: %s", args.out, exc)
            return EXIT_IO
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_suite
    results = run_suite(k_d=args.kd, lam=args.lam, quick=args.quick)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.ok for r in results) else EXIT_PROPERTY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flexlift", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"flexlift {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a multi-trial batch")
    r.add_argument("target", help="scenario name (exp1, exp2, exp3, custom) or YAML config file")
    r.add_argument("--method", action="append", choices=METHODS, help="repeat for several methods")
    r.add_argument("--trials", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--duration", type=float, help="truncate every trial (s)")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field, e.g. gains.adaptive.k_d=2")
    r.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV}/<scenario>-seed<seed>)")
    r.add_argument("--jobs", type=int, default=1, help="run methods in parallel processes")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="cross-method table from report directories")
    c.add_argument("reports", nargs="+")
    c.add_argument("--baseline", help="method (or report:method) used as ratio denominator")
    c.add_argument("--out", help="write the long-format table to this CSV")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("validate", help="property suite on the synthetic linear force")
    v.add_argument("--kd", type=float, default=1.0, help="derivative gain for the Lyapunov check")
    v.add_argument("--lam", type=float, default=0.0, help="forgetting factor; > 0 skips the Lyapunov check")
    v.add_argument("--quick", action="store_true", help="shorter horizons")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error at %s: %s", exc.path, exc.message)
        return EXIT_CONFIG
    except SolverFailure as exc:
        log.error("strip solver failed: %s", exc)
        return EXIT_TASK
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
