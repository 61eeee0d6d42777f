"""apache-sim command line: run-op, run-app, sweep, report, validate-config.

Every run writes <name>.json (plus .csv / .md when asked) and the resolved
config as <name>.config.ini into --out. Exit status: 0 when all functional
checks and invariants pass, 1 on a failed check, 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional

from apache_sim import bench
from apache_sim.config import dump_config, load_config
from apache_sim.engine import SimReport, check_report, simulate_trace
from apache_sim.errors import ApacheSimError, FormatError, InvariantViolation
from apache_sim.scheduler import read_trace
from apache_sim.workloads import APPS, BUNDLED, RUN_OPS, bundled_trace

SCHEMA = "apache-sim-report/1"
REPORT_KEYS = ("schema", "name", "n_dimms", "makespan_cycles", "op_per_s", "utl_ntt", "utl_ntt_prime", "keyswitch")
OK, FAILED, USAGE = 0, 1, 2

# functional execution budget (nodes) when --functional is not given
DEFAULT_BUDGET = 16


class CheckFailed(Exception):
    pass


def _functional(value: str):
    if value == "all":
        return True
    if value == "none":
        return False
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError("functional budget must be >= 0")
    return n


def _kv(items: Optional[List[str]]) -> Dict[str, object]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _config(args):
    cfg = load_config(args.config)
    if getattr(args, "mode", None):
        cfg = cfg.with_fu(mode=args.mode)
    if getattr(args, "dimms", None):
        cfg = cfg.with_dimms(args.dimms)
    return cfg


def _report_dict(name: str, rep: SimReport) -> dict:
    out = rep.to_json()
    out["schema"] = SCHEMA
    out["name"] = name
    return out


def _markdown(rows: List[dict], cols: List[str]) -> str:
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in rows:
        lines.append("| " + " | ".join(_fmt(r.get(c)) for c in cols) + " |")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def write_outputs(name: str, rep: SimReport, cfg, out_dir: str, fmt: str) -> str:
    """Write the JSON report, the optional CSV/Markdown view and the config snapshot."""
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, name)
    data = _report_dict(name, rep)
    with open(base + ".json", "w") as fh:
        json.dump(data, fh, sort_keys=True, indent=1)
    if fmt == "csv":
        with open(base + ".csv", "w") as fh:
            fh.write(rep.to_csv())
    elif fmt == "md":
        with open(base + ".md", "w") as fh:
            fh.write(_markdown(table_rows([data]), TABLE_COLS))
    with open(base + ".config.ini", "w") as fh:
        fh.write(dump_config(cfg))
    return base + ".json"


def _check(rep: SimReport) -> None:
    check_report(rep)
    f = rep.functional
    if f and not f.get("verified", True):
        raise CheckFailed(f"functional verification failed for {', '.join(f['failures'][:5])}")


def _summary(name: str, rep: SimReport) -> str:
    ops = ", ".join(f"{k} {v:.4g} op/s" for k, v in rep.op_per_s.items()) or "no operators"
    utl = "".join(f"; {k} {v:.3f}" for k, v in (("Utl", rep.utl_ntt), ("Utl'", rep.utl_ntt_prime)) if v is not None)
    fn = rep.functional
    chk = f"; verified {fn['executed']} nodes" if fn else ""
    return f"{name}: {rep.n_dimms} DIMM(s), makespan {rep.makespan_cycles} cycles; {ops}{utl}{chk}"


# -- subcommands ---------------------------------------------------------------------


def run_op(args) -> int:
    cfg = _config(args)
    fn = DEFAULT_BUDGET if args.functional is None else args.functional
    rep = bench.run_op(args.op, cfg, cfg.scheduler.dimms, args.count, args.seed, fn)
    name = args.name or f"{args.op}_x{cfg.scheduler.dimms}"
    path = write_outputs(name, rep, cfg, args.out, args.format)
    print(_summary(name, rep))
    print(f"wrote {path}")
    _check(rep)
    return OK


def run_app(args) -> int:
    cfg = _config(args)
    fn = DEFAULT_BUDGET if args.functional is None else args.functional
    if args.trace:
        trace = read_trace(args.trace)
        label = os.path.splitext(os.path.basename(args.trace))[0]
    elif args.app in BUNDLED and not args.param:
        trace = bundled_trace(args.app)
        label = args.app
    elif args.app in APPS:
        trace = APPS[args.app](**args.param_kw)
        label = args.app
    else:
        raise ApacheSimError(f"unknown application {args.app!r}; choose from "
                             f"{', '.join(sorted(set(APPS) | set(BUNDLED)))}")
    rep = simulate_trace(trace, cfg, cfg.scheduler.dimms, args.seed, fn)
    name = args.name or f"{label}_x{cfg.scheduler.dimms}"
    path = write_outputs(name, rep, cfg, args.out, args.format)
    print(_summary(name, rep))
    lw = rep.transfers.get("lwe_forward_s")
    print(f"transfers: {rep.transfers['count']} ({rep.transfers['bytes']} bytes)"
          + (f", LWE forward {lw * 1e6:.3f} us" if lw else ""))
    print(f"wrote {path}")
    _check(rep)
    return OK


def sweep(args) -> int:
    """Run every (workload, DIMM count) pair; one engine per worker thread."""
    base = load_config(args.config)
    if args.mode:
        base = base.with_fu(mode=args.mode)
    jobs = [("op", o, d) for o in args.ops for d in args.dimms] + [("app", a, d) for a in args.apps for d in args.dimms]
    fn = 0 if args.functional is None else args.functional

    def work(job):
        kind, what, d = job
        cfg = base.with_dimms(d)
        if kind == "op":
            rep = bench.run_op(what, cfg, d, args.count, args.seed, fn)
        else:
            trace = bundled_trace(what) if what in BUNDLED else APPS[what]()
            rep = simulate_trace(trace, cfg, d, args.seed, fn)
        name = f"{what}_x{d}"
        return name, rep, cfg

    with ThreadPoolExecutor(max_workers=args.jobs) as ex:
        results = list(ex.map(work, jobs))
    failed = False
    datas = []
    for name, rep, cfg in results:
        write_outputs(name, rep, cfg, args.out, "json")
        datas.append(_report_dict(name, rep))
        print(_summary(name, rep))
        try:
            _check(rep)
        except (CheckFailed, InvariantViolation) as exc:
            print(f"error: {name}: {exc}", file=sys.stderr)
            failed = True
    table = os.path.join(args.out, f"sweep.{'md' if args.format == 'md' else 'csv'}")
    with open(table, "w") as fh:
        fh.write(render_table(datas, "md" if args.format == "md" else "csv"))
    print(f"wrote {table}")
    return FAILED if failed else OK


TABLE_COLS = ["name", "dimms", "op", "count", "op_per_s", "ratio", "utl_ntt", "utl_ntt_prime", "reduction"]


def load_report(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a JSON report ({exc})") from exc
    if not isinstance(data, dict) or data.get("schema") != SCHEMA or any(k not in data for k in REPORT_KEYS):
        raise FormatError(f"{path}: report schema mismatch (expected {SCHEMA})")
    return data


def table_rows(reports: List[dict]) -> List[dict]:
    """One row per (report, operator); ratio is op/s over the smallest DIMM
    count of the same workload and operator."""
    rows = []
    for r in reports:
        red = r["keyswitch"].get("reduction", {})
        counts = r.get("op_counts", {})
        for op, ops in sorted(r["op_per_s"].items()) or [(None, None)]:
            rows.append({"name": r["name"], "dimms": r["n_dimms"], "op": op, "count": counts.get(op),
                         "op_per_s": ops, "utl_ntt": r["utl_ntt"], "utl_ntt_prime": r["utl_ntt_prime"],
                         "reduction": red.get(op)})
    base: Dict[tuple, dict] = {}
    for row in rows:
        key = (_workload(row["name"]), row["op"])
        if key not in base or row["dimms"] < base[key]["dimms"]:
            base[key] = row
    for row in rows:
        b = base[(_workload(row["name"]), row["op"])]
        if b is not row and b["op_per_s"] and row["op_per_s"] is not None:
            row["ratio"] = row["op_per_s"] / b["op_per_s"]
    return rows


def _workload(name: str) -> str:
    head, sep, tail = name.rpartition("_x")
    return head if sep and tail.isdigit() else name


def render_table(reports: List[dict], fmt: str = "md") -> str:
    rows = table_rows(reports)
    if fmt == "md":
        return _markdown(rows, TABLE_COLS)
    buf = io.StringIO()
    w = csv.DictWriter(buf, TABLE_COLS, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({c: "" if row.get(c) is None else row.get(c) for c in TABLE_COLS})
    return buf.getvalue()


def report(args) -> int:
    reports = [load_report(p) for p in args.reports]
    fmt = "csv" if args.format == "csv" else "md"
    text = render_table(reports, fmt)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.plot_data:
        with open(args.plot_data, "w") as fh:
            fh.write(render_table(reports, "csv"))
    return OK


def validate_config(args) -> int:
    cfg = load_config(args.path or args.config)
    print(dump_config(cfg), end="")
    red = bench.reduction_factors(cfg)
    print(f"# reduction factors: public {red['public']:.4g}, private {red['private']:.4g}")
    return OK


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config (default: $APACHE_SIM_CONFIG, then the bundled calibration)")
    common.add_argument("--mode", choices=("one64", "two32"), help="force the configurable FU bit-width mode")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="reports", help="output directory")
    common.add_argument("--format", choices=("json", "csv", "md"), default="json")
    common.add_argument("--functional", type=_functional, default=None,
                        help="'all', 'none' or a node budget for bit-exact execution")

    p = argparse.ArgumentParser(prog="apache-sim", description="Multi-DIMM FHE accelerator simulator")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run-op", parents=[common], help="batch of one operator")
    s.add_argument("op", choices=RUN_OPS)
    s.add_argument("--dimms", type=_positive, default=None)
    s.add_argument("--count", type=_count, default=bench.THROUGHPUT_BATCH)
    s.add_argument("--name")
    s.set_defaults(func=run_op)

    s = sub.add_parser("run-app", parents=[common], help="application trace analogue")
    s.add_argument("app", help=f"one of {', '.join(sorted(set(APPS) | set(BUNDLED)))}, or a label with --trace")
    s.add_argument("--trace", help="JSON-lines trace file instead of a generator")
    s.add_argument("--param", action="append", metavar="KEY=VALUE", help="generator argument (repeatable)")
    s.add_argument("--dimms", type=_positive, default=None)
    s.add_argument("--name")
    s.set_defaults(func=run_app)

    s = sub.add_parser("sweep", parents=[common], help="workloads x DIMM counts in parallel threads")
    s.add_argument("--ops", nargs="*", default=["HomGate", "CBoot"], choices=RUN_OPS)
    s.add_argument("--apps", nargs="*", default=[], choices=sorted(set(APPS) | set(BUNDLED)))
    s.add_argument("--dimms", nargs="+", type=_positive, default=[2, 4])
    s.add_argument("--count", type=_count, default=bench.THROUGHPUT_BATCH)
    s.add_argument("--jobs", type=_positive, default=4)
    s.set_defaults(func=sweep)

    s = sub.add_parser("report", help="merge report JSON files into one table")
    s.add_argument("reports", nargs="+")
    s.add_argument("--format", choices=("md", "csv"), default="md")
    s.add_argument("--output", "-o")
    s.add_argument("--plot-data", help="also write the rows as CSV for external plotting")
    s.set_defaults(func=report)

    s = sub.add_parser("validate-config", help="parse a config and print it resolved")
    s.add_argument("path", nargs="?")
    s.add_argument("--config")
    s.set_defaults(func=validate_config)
    return p


def _positive(v: str) -> int:
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _count(v: str) -> int:
    n = int(v)
    if n < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return n


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run-app":
        try:
            args.param_kw = _kv(args.param)
        except argparse.ArgumentTypeError as exc:
            parser.error(str(exc))
    try:
        return args.func(args)
    except (CheckFailed, InvariantViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILED
    except (ApacheSimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
