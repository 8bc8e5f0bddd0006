"""Benchmark protocol: one Table-II-shaped row per case in a suite manifest.

A suite is a JSON document::

    {"cases": [{"case": "b4gic", "objective": "blocker-cost", "served_frac": 0.85}, ...]}

``case`` names a bundled case or a path relative to the manifest. Any
PlacementProblem field (objective, budget, count, count_mode, shed_cap,
served_frac, gap, time_limit) may be given per entry; ``method`` selects
``bnb`` (default) or ``enumerate``.
"""

from __future__ import annotations

import csv
import io
import json
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .case import bundled_case_path, load_case
from .errors import GicBlockError
from .placement import PlacementProblem, branch_and_bound, enumerate_optimal

COLUMNS = ("case", "busses", "blockers", "load_met", "cost", "runtime_s", "machine", "status", "error")
PROBLEM_KEYS = ("objective", "budget", "count", "count_mode", "shed_cap", "served_frac", "gap",
                "time_limit", "gic_sq_edges")


def machine_descriptor():
    return f"{platform.system()} {platform.machine()} python{platform.python_version()}"


def format_pct(frac):
    """81.8% style; whole percentages drop the decimal."""
    pct = round(100.0 * frac, 1)
    return f"{pct:.0f}%" if pct == int(pct) else f"{pct:.1f}%"


@dataclass
class BenchmarkRow:
    case: str
    busses: int | str = ""
    blockers: str = ""
    load_met: str = ""
    cost: str = ""
    runtime_s: str = ""
    machine: str = ""
    status: str = "ok"
    error: str = ""


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(asdict(r))
        return buf.getvalue()

    def to_markdown(self):
        head = "| " + " | ".join(COLUMNS) + " |"
        sep = "|" + "|".join("---" for _ in COLUMNS) + "|"
        body = ["| " + " | ".join(str(getattr(r, c)).replace("|", "/") for c in COLUMNS) + " |"
                for r in self.rows]
        return "\n".join([head, sep, *body]) + "\n"


def _resolve(entry, base):
    ref = entry["case"]
    p = Path(ref)
    if not p.is_absolute():
        p = base / p
    if p.exists():
        return p
    return bundled_case_path(ref)


def run_entry(entry, base=Path(".")):
    name = entry.get("name", Path(str(entry["case"])).stem)
    row = BenchmarkRow(case=name, machine=machine_descriptor())
    t0 = time.perf_counter()
    try:
        case = load_case(_resolve(entry, base))
        row.busses = len(case.busses)
        kw = {k: entry[k] for k in PROBLEM_KEYS if k in entry}
        problem = PlacementProblem(case, **kw)
        solve = enumerate_optimal if entry.get("method") == "enumerate" else branch_and_bound
        sol = solve(problem)
        row.blockers = f"{sol.blocker_count}/{len(case.candidates)}"
        row.load_met = format_pct(sol.load_met)
        row.cost = f"{sol.blocker_cost:.1f}"
        row.status = sol.status
    except (GicBlockError, ValueError, KeyError, OSError) as exc:
        row.status = "error"
        row.error = f"{type(exc).__name__}: {exc}"
    row.runtime_s = f"{time.perf_counter() - t0:.1f}"
    return row


def benchmark(suite_path, csv_path=None, md_path=None):
    """Run every case in the suite; failures are recorded in-row and the suite continues."""
    suite_path = Path(suite_path)
    doc = json.loads(suite_path.read_text("utf-8"))
    report = BenchmarkReport()
    for entry in doc.get("cases", []):
        report.rows.append(run_entry(entry, suite_path.parent))
    if csv_path:
        Path(csv_path).write_text(report.to_csv(), "utf-8")
    if md_path:
        Path(md_path).write_text(report.to_markdown(), "utf-8")
    return report
