"""Command-line front end: ``gicblock <subcommand> ...``.

Exit codes are listed in ``gicblock.errors.EXIT_CODES``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import errors
from .acopf import OpfOptions, solve_coupled
from .bench import benchmark, format_pct
from .case import bundled_case_path, load_case, parse_case, validate
from .coupling import apply_field
from .dcnet import build_dc_network, to_csv, to_dot
from .errors import CaseParseError, GicBlockError
from .gic import BlockerConfig, solve_gic
from .placement import PlacementProblem, branch_and_bound, enumerate_optimal

log = logging.getLogger("gicblock")


# ------------------------------------------------------------------ helpers


def resolve_case(ref):
    """A path, or failing that the name of a bundled case."""
    p = Path(ref)
    if p.exists() or p.suffix:
        return p
    bundled = bundled_case_path(str(ref))
    return bundled if bundled.exists() else p


def _load(args):
    case = load_case(resolve_case(args.case))
    if getattr(args, "field_mag", None) is not None or getattr(args, "field_dir", None) is not None:
        case = case.with_field(args.field_mag, args.field_dir)
    return case


def _dc(case):
    return apply_field(build_dc_network(case), case.gmd)


def dump_dc(net, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nodes, edges = to_csv(net)
    (out / "dc.dot").write_text(to_dot(net), "utf-8")
    (out / "dc_nodes.csv").write_text(nodes, "utf-8")
    (out / "dc_edges.csv").write_text(edges, "utf-8")
    return out


def _blockers(text):
    return frozenset(s for s in (text or "").split(",") if s)


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, "utf-8")


def gic_table(case, gic, voltages=False):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "i_eff_A", "qloss_pu"])
    for t in case.transformers:
        if t.id in gic.i_eff:
            w.writerow([t.id, f"{gic.i_eff[t.id]:.6f}", f"{gic.q_loss[t.id]:.6f}"])
    if voltages:
        w.writerow([])
        w.writerow(["node", "v_V"])
        for nid, v in zip(gic.node_ids, gic.node_v):
            w.writerow([nid, f"{v:.6f}"])
    return buf.getvalue()


def ac_summary(case, sol):
    lines = [f"status {sol.status}  objective {sol.objective:.6g}  max residual {sol.max_residual:.2e}",
             f"{'bus':>6} {'v_pu':>8} {'theta_deg':>10} {'qloss_pu':>9}"]
    for b in case.busses:
        lines.append(f"{b.id:>6} {sol.v[b.id]:8.4f} {math.degrees(sol.theta[b.id]):10.4f} "
                     f"{sol.qloss.get(b.id, 0.0):9.4f}")
    lines.append(f"{'gen':>6} {'p_pu':>8} {'q_pu':>10}")
    for g in case.generators:
        lines.append(f"{g.id:>6} {sol.p_g[g.id]:8.4f} {sol.q_g[g.id]:10.4f}")
    lines.append(f"load met {format_pct(sol.load_met(case))}")
    return "\n".join(lines) + "\n"


def ieff_before_after(case, sol):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "i_eff_before_A", "i_eff_after_A"])
    for t in case.transformers:
        if t.id in sol.i_eff_before:
            w.writerow([t.id, f"{sol.i_eff_before[t.id]:.6f}", f"{sol.i_eff.get(t.id, 0.0):.6f}"])
    return buf.getvalue()


def _problem(case, args):
    return PlacementProblem(
        case,
        objective=args.objective,
        budget=args.budget,
        count=args.count,
        count_mode="le" if args.count_le else "eq",
        shed_cap=args.shed_cap,
        served_frac=args.served_frac,
        gap=args.gap,
        time_limit=args.time_limit,
        gic_sq_edges=args.gic_sq_edges,
    )


# ------------------------------------------------------------------ pipeline


@dataclass
class PipelineOptions:
    out_dir: str = "out"
    field_mag: float | None = None
    field_dir: float | None = None
    dump_dc_only: bool = False
    blockers: frozenset = frozenset()
    ac: OpfOptions = field(default_factory=OpfOptions)
    iterate: bool = False
    place: bool = False
    placement: dict = field(default_factory=dict)
    enumerate: bool = False


def run_pipeline(case_path, options=None):
    """build -> couple -> gic -> q_loss -> AC (-> placement); returns written paths."""
    opts = options or PipelineOptions()
    out = Path(opts.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    case = load_case(resolve_case(case_path))
    if opts.field_mag is not None or opts.field_dir is not None:
        case = case.with_field(opts.field_mag, opts.field_dir)
    net = _dc(case)
    dump_dc(net, out)
    written = {"dc": [out / "dc.dot", out / "dc_nodes.csv", out / "dc_edges.csv"]}
    if opts.dump_dc_only:
        return written
    gic = solve_gic(net, BlockerConfig(opts.blockers), case=case)
    (out / "gic.csv").write_text(gic_table(case, gic, voltages=True), "utf-8")
    written["gic"] = out / "gic.csv"
    try:
        ac = solve_coupled(case, gic, opts.ac, iterate=opts.iterate)
        (out / "acpf.json").write_text(json.dumps(ac.to_dict(), indent=1), "utf-8")
        written["acpf"] = out / "acpf.json"
    except errors.InfeasibleError as exc:
        # without blockers the AC problem is often infeasible; placement still runs
        if not opts.place:
            raise
        (out / "acpf.json").write_text(json.dumps({"status": "infeasible", "message": str(exc),
                                                   "report": exc.report}, indent=1), "utf-8")
        written["acpf"] = out / "acpf.json"
    if opts.place:
        problem = PlacementProblem(case, **opts.placement)
        sol = (enumerate_optimal if opts.enumerate else branch_and_bound)(problem)
        (out / "placement.json").write_text(json.dumps(sol.to_dict(), indent=1), "utf-8")
        (out / "ieff.csv").write_text(ieff_before_after(case, sol), "utf-8")
        row = {"case": case.name, "busses": len(case.busses),
               "blockers": f"{sol.blocker_count}/{len(case.candidates)}",
               "load_met": format_pct(sol.load_met), "cost": f"{sol.blocker_cost:.1f}",
               "runtime_s": f"{sol.stats.get('wall_time', 0.0):.1f}"}
        (out / "report.json").write_text(json.dumps(row, indent=1), "utf-8")
        written.update(placement=out / "placement.json", ieff=out / "ieff.csv",
                       report=out / "report.json")
    return written


# ------------------------------------------------------------------ commands


def cmd_validate(args):
    path = resolve_case(args.case)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise CaseParseError(f"case file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"{path}: invalid JSON: {exc}") from None
    missing_gmd = isinstance(doc, dict) and "gmd" not in doc
    if missing_gmd:
        doc = {**doc, "gmd": {"magnitude": 0.0, "direction": 0.0}}
    case = parse_case(doc)
    if missing_gmd:
        case = replace(case, gmd=None)
    diags = validate(case)
    for d in diags:
        print(d)
    if any(d.severity == "ERROR" for d in diags):
        return errors.CaseValidationError.exit_code
    if not diags:
        print("OK")
    return 0


def cmd_solve_gic(args):
    case = _load(args)
    net = _dc(case)
    if args.dump_dc:
        dump_dc(net, args.dump_dc)
    gic = solve_gic(net, BlockerConfig(_blockers(args.blockers)), case=case)
    _write(gic_table(case, gic, voltages=args.voltages), args.out)
    return 0


def cmd_acpf(args):
    case = _load(args)
    net = _dc(case)
    if args.dump_dc:
        dump_dc(net, args.dump_dc)
    gic = solve_gic(net, BlockerConfig(_blockers(args.blockers)), case=case)
    opts = OpfOptions(mode=args.mode, objective=args.ac_objective, shed=args.shed, tol=args.tol)
    sol = solve_coupled(case, gic, opts, iterate=args.iterate)
    if args.out:
        Path(args.out).write_text(json.dumps(sol.to_dict(), indent=1), "utf-8")
    sys.stdout.write(ac_summary(case, sol))
    return 0


def cmd_place(args):
    case = _load(args)
    if args.dump_dc:
        dump_dc(_dc(case), args.dump_dc)
    problem = _problem(case, args)
    sol = (enumerate_optimal if args.enumerate else branch_and_bound)(problem)
    doc = sol.to_dict()
    doc["load_met_pct"] = format_pct(sol.load_met)
    doc["candidates"] = len(case.candidates)
    _write(json.dumps(doc, indent=1) + "\n", args.out)
    if args.ieff_csv:
        Path(args.ieff_csv).write_text(ieff_before_after(case, sol), "utf-8")
    return 0


def cmd_benchmark(args):
    report = benchmark(args.suite, args.csv, args.md)
    sys.stdout.write(report.to_markdown())
    return 0


def cmd_run(args):
    placement = {}
    for key in ("objective", "budget", "count", "shed_cap", "served_frac", "gap", "time_limit",
                "gic_sq_edges"):
        placement[key] = getattr(args, key)
    placement["count_mode"] = "le" if args.count_le else "eq"
    opts = PipelineOptions(
        out_dir=args.out_dir, field_mag=args.field_mag, field_dir=args.field_dir,
        dump_dc_only=args.dump_dc, blockers=_blockers(args.blockers),
        ac=OpfOptions(mode=args.mode), iterate=args.iterate, place=args.place,
        placement=placement, enumerate=args.enumerate,
    )
    written = run_pipeline(args.case, opts)
    for key, val in written.items():
        for p in val if isinstance(val, list) else [val]:
            print(f"{key}\t{p}")
    return 0


# ------------------------------------------------------------------ parser


def _add_field(p):
    p.add_argument("--field-mag", type=float, help="override field magnitude (V/km)")
    p.add_argument("--field-dir", type=float, help="override field direction (deg from north)")


def _add_place(p):
    p.add_argument("--objective", choices=("blocker-cost", "shed", "gic-sq"), default="blocker-cost")
    p.add_argument("--budget", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--count-le", action="store_true", help="treat --count as an upper limit")
    p.add_argument("--shed-cap", type=float)
    p.add_argument("--served-frac", type=float, default=0.85)
    p.add_argument("--gap", type=float, default=1e-6)
    p.add_argument("--time-limit", type=float, default=3600.0)
    p.add_argument("--enumerate", action="store_true", help="exhaustive oracle instead of B&B")
    p.add_argument("--gic-sq-edges", choices=("transformers", "all"), default="transformers")


def build_parser():
    ap = argparse.ArgumentParser(prog="gicblock", description="GIC blocker placement toolkit")
    ap.add_argument("--config", help="JSON file of option defaults, keyed by subcommand")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a case file")
    p.add_argument("case")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve-gic", help="quasi-dc solve for a blocker configuration")
    p.add_argument("case")
    p.add_argument("--blockers", help="comma-separated neutral ids, e.g. n:T1,n:T2")
    p.add_argument("--voltages", action="store_true", help="append nodal voltages")
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.add_argument("--dump-dc", metavar="DIR", help="write DOT and CSV tables of the dc network")
    _add_field(p)
    p.set_defaults(func=cmd_solve_gic)

    p = sub.add_parser("acpf", help="AC power flow / OPF with q_loss pseudo-loads")
    p.add_argument("case")
    p.add_argument("--blockers")
    p.add_argument("--mode", choices=("opf", "pf"), default="opf")
    p.add_argument("--ac-objective", choices=("gen-cost", "shed-cost"), default="gen-cost")
    p.add_argument("--shed", choices=("none", "binary", "continuous"), default="none")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--iterate", action="store_true", help="iterate q_loss to a voltage fixed point")
    p.add_argument("--out", help="JSON output path")
    p.add_argument("--dump-dc", metavar="DIR")
    _add_field(p)
    p.set_defaults(func=cmd_acpf)

    p = sub.add_parser("place-blockers", help="optimal blocker placement")
    p.add_argument("case")
    _add_place(p)
    p.add_argument("--out", help="JSON output path (default stdout)")
    p.add_argument("--ieff-csv", help="per-transformer i_eff before/after CSV")
    p.add_argument("--dump-dc", metavar="DIR")
    _add_field(p)
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("benchmark", help="run a suite manifest")
    p.add_argument("suite")
    p.add_argument("--csv")
    p.add_argument("--md")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("run", help="end-to-end pipeline writing all artifacts")
    p.add_argument("case")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--dump-dc", action="store_true", help="only build and dump the dc network")
    p.add_argument("--blockers")
    p.add_argument("--mode", choices=("opf", "pf"), default="opf")
    p.add_argument("--iterate", action="store_true")
    p.add_argument("--place", action="store_true", help="also run blocker placement")
    _add_place(p)
    _add_field(p)
    p.set_defaults(func=cmd_run)
    return ap, sub


def _apply_config(ap, sub, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = json.loads(Path(known.config).read_text("utf-8"))
    common = {k.replace("-", "_"): v for k, v in cfg.get("defaults", {}).items()}
    for name, p in sub.choices.items():
        own = {k.replace("-", "_"): v for k, v in cfg.get(name, {}).items()}
        dests = {a.dest for a in p._actions}
        p.set_defaults(**{k: v for k, v in {**common, **own}.items() if k in dests})


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    ap, sub = build_parser()
    try:
        _apply_config(ap, sub, argv)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"gicblock: error: --config: {exc}", file=sys.stderr)
        return 2
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except GicBlockError as exc:
        print(f"gicblock: error: {exc}", file=sys.stderr)
        for d in getattr(exc, "diagnostics", ()):
            print(d, file=sys.stderr)
        report = getattr(exc, "report", None)
        if report:
            print(json.dumps(report, indent=1), file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"gicblock: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
