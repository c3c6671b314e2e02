"""Command line entry point: ``switchtx run|sweep|crash-test|layout``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench
from .cluster import Mode
from .config import ExperimentConfig, load_config, parse_config
from .errors import SwitchTxError
from .layout import plan_layout, random_layout, select_offload_set
from .node import CCPolicy
from .packet import write_trace
from .workloads import read_trace_file

log = logging.getLogger("switchtx")

EXIT_AUDIT = 3
EXIT_ERROR = 2


def _config(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise SwitchTxError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    if args.mode:
        overrides["mode"] = args.mode
    if args.protocol:
        overrides["protocol"] = args.protocol
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config:
        return load_config(args.config, **overrides)
    return parse_config("", **overrides)


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout
    return open(path, "w", newline="")


def cmd_run(args) -> int:
    cfg = _config(args)
    result = bench.run_experiment(cfg)
    out = _open_out(args.out)
    try:
        bench.write_csv([result.row()], out)
    finally:
        if out is not sys.stdout:
            out.close()
    if args.wal_dir:
        d = Path(args.wal_dir)
        d.mkdir(parents=True, exist_ok=True)
        for wal in result.cluster.wals:
            (d / f"node{wal.node_id}.wal").write_bytes(wal.to_bytes())
            (d / f"node{wal.node_id}.txt").write_text(wal.dump_text())
    if args.packet_trace:
        with open(args.packet_trace, "wb") as fh:
            write_trace(fh, (c.packet for c in result.cluster.completions))
    log.info("throughput %.1f txn/Mtick, audit %s", result.metrics.throughput, "ok" if result.ok else "FAILED")
    if not result.ok:
        for v in result.audit.violations:
            print(f"audit: {v}", file=sys.stderr)
        return EXIT_AUDIT
    return 0


def _parse_values(text: str):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            out.append(int(tok))
        except ValueError:
            try:
                out.append(float(tok))
            except ValueError:
                out.append(tok)
    return out


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = _parse_values(args.values) if args.param else ()
    modes = [m.strip() for m in args.modes.split(",")]
    for m in modes:
        Mode(m)
    results = bench.sweep(cfg, args.param, values, modes)
    out = _open_out(args.out)
    try:
        bench.write_csv([row for _, row in results], out)
    finally:
        if out is not sys.stdout:
            out.close()
    failed = [r for r, _ in results if not r.ok]
    for r in failed:
        print(f"audit failed ({r.config.mode}): {'; '.join(r.audit.violations[:3])}", file=sys.stderr)
    return EXIT_AUDIT if failed else 0


def cmd_crash_test(args) -> int:
    outcomes = bench.crash_test(args.runs, args.seed if args.seed is not None else 0)
    out = _open_out(args.out)
    try:
        bench.write_csv([o.row() for o in outcomes], out)
    finally:
        if out is not sys.stdout:
            out.close()
    bad = [o for o in outcomes if not o.ok]
    undetermined = sum(not o.determined for o in outcomes)
    print(f"{len(outcomes)} crash runs, {len(bad)} failed, {undetermined} with ambiguous switch order",
          file=sys.stderr)
    return EXIT_AUDIT if bad else 0


def cmd_layout(args) -> int:
    cfg = _config(args)
    with open(args.trace) as fh:
        trace = read_trace_file(fh)
    sw = cfg.switch_config()
    hot = select_offload_set(trace, sw.capacity, args.min_count)
    if cfg.layout == "random":
        plan = random_layout(hot, sw, cfg.seed)
    else:
        plan = plan_layout(trace, hot, sw, seed=cfg.seed)
    out = _open_out(args.out)
    try:
        out.write(plan.to_csv())
    finally:
        if out is not sys.stdout:
            out.close()
    prof = bench.pass_profile(trace, plan)
    print(f"{len(hot)} keys placed; offloaded txns: {prof['single']} single-pass, {prof['multi']} multi-pass",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="switchtx", description="In-network transaction processing simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--config", help="key = value experiment file")
        sp.add_argument("--out", required=out_required, help="output file, '-' for stdout")
        sp.add_argument("--mode", choices=[m.value for m in Mode])
        sp.add_argument("--protocol", choices=[c.value for c in CCPolicy])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    r = sub.add_parser("run", help="one timed run, one CSV row")
    common(r, out_required=True)
    r.add_argument("--wal-dir", help="write each node's binary log and text dump here")
    r.add_argument("--packet-trace", help="write executed switch packets as a binary trace")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="vary one config key across modes")
    common(s)
    s.add_argument("--param", help="config key to vary")
    s.add_argument("--values", default="", help="comma-separated values")
    s.add_argument("--modes", default="p4db,no-switch,lm-switch")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("crash-test", help="crash injection campaign")
    c.add_argument("--runs", type=int, default=500)
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_crash_test)

    lay = sub.add_parser("layout", help="plan a register layout from a text trace")
    common(lay)
    lay.add_argument("--trace", required=True)
    lay.add_argument("--min-count", type=int, default=1)
    lay.set_defaults(func=cmd_layout)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (SwitchTxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
