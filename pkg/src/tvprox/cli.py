"""Command-line entry point: ``tvprox {make-problem,run,sweep,bounds}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench
from .errors import ConfigError, TVProxError
from .io import dumps, read_trace, write_json, write_trace

log = logging.getLogger("tvprox")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config (INI)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override the problem and solver seeds")
    common.add_argument("--quiet", action="store_true", help="only report errors")

    p = argparse.ArgumentParser(
        prog="tvprox", description="Run and analyse online inexact proximal-gradient experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("make-problem", parents=[common],
                   help="print the generated problem description as JSON")
    sub.add_parser("run", parents=[common], help="run one experiment")
    sw = sub.add_parser("sweep", parents=[common], help="grid over seeds, eps and gamma_e")
    sw.add_argument("--jobs", type=int, help="parallel pipelines")
    b = sub.add_parser("bounds", parents=[common], help="re-evaluate bounds on a trace CSV")
    b.add_argument("--trace", required=True, help="trace CSV written by 'run'")
    return p


def _load(args):
    cfg = bench.load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(problem={"seed": args.seed}, solver={"seed": args.seed})
    return cfg


def _out(args, cfg):
    if args.out:
        return Path(args.out)
    if cfg["output"]["dir"]:
        return Path(cfg["output"]["dir"])
    return None


def _emit(text, quiet):
    if not quiet:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        out = _out(args, cfg)
        if args.command == "make-problem":
            spec = bench.problem_spec(cfg)
            if out is not None:
                write_json(out / "problem.json", spec)
            _emit(dumps(spec), args.quiet)
            return bench.EXIT_OK
        if args.command == "run":
            res = bench.run_experiment(cfg, out)
            _emit(_run_lines(res.summary), args.quiet)
            return res.exit_code
        if args.command == "sweep":
            if out is None:
                raise ConfigError("sweep needs --out or [output] dir")
            code = bench.run_sweep(cfg, out, args.jobs)
            _emit(f"sweep finished, exit code {code}\n", args.quiet)
            return code
        trace, _ = read_trace(args.trace)
        report, code = bench.reevaluate_bounds(cfg, trace)
        if out is not None:
            write_json(out / "bounds.json", report.to_dict())
            write_trace(out / "trace_rebounded.csv", trace, report)
        _emit(_bound_lines(report.to_dict()), args.quiet)
        return code
    except ConfigError as exc:
        log.error("%s", exc)
        return bench.EXIT_CONFIG
    except (TVProxError, OSError) as exc:
        log.error("%s", exc)
        return bench.EXIT_RUNTIME


def _bound_lines(doc):
    lines = []
    for name, node in doc["bounds"].items():
        if not node["applicable"]:
            lines.append(f"{name:14s} n/a ({node['reason']})")
        else:
            state = "ok" if node["satisfied"] else f"VIOLATED x{node['violations']}"
            lines.append(f"{name:14s} {state}  final lhs={node['final_lhs']:.6g} "
                         f"rhs={node['final_rhs']:.6g}")
    return "\n".join(lines) + "\n"


def _run_lines(summary):
    out = []
    for label in ("run", "baseline"):
        node = summary.get(label)
        if node is None:
            continue
        if "error" in node:
            out.append(f"[{label}] error: {node['error']}\n")
            continue
        out.append(f"[{label}] steps={node['steps']} "
                   f"running-average={node['plateau']['final']:.6g}\n")
        out.append(_bound_lines(node))
    out.append(f"exit code {summary['exit_code']}\n")
    return "".join(out)


if __name__ == "__main__":
    sys.exit(main())
