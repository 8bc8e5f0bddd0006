import json

from gicblock.bench import COLUMNS, BenchmarkReport, benchmark, format_pct, run_entry


def _suite(tmp_path, cases):
    p = tmp_path / "suite.json"
    p.write_text(json.dumps({"cases": cases}))
    return p


def test_format_pct():
    assert format_pct(1.0) == "100%"
    assert format_pct(0.818) == "81.8%"
    assert format_pct(0.85) == "85%"


def test_b4gic_row():
    row = run_entry({"case": "b4gic"})
    assert (row.case, row.busses, row.blockers, row.load_met, row.cost, row.status) == (
        "b4gic", 4, "1/2", "100%", "1.0", "proved")
    assert float(row.runtime_s) < 300


def test_three_case_suite(tmp_path):
    suite = _suite(tmp_path, [
        {"case": "b4gic"},
        {"case": "b4gic", "method": "enumerate", "name": "b4gic-enum"},
        {"case": "missing-case"},
    ])
    csv_path, md_path = tmp_path / "t.csv", tmp_path / "t.md"
    rep = benchmark(suite, csv_path, md_path)
    assert len(rep.rows) == 3
    assert rep.rows[2].status == "error" and "missing-case" in rep.rows[2].error
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ",".join(COLUMNS) and len(lines) == 4
    assert md_path.read_text().count("\n") == 5


def test_empty_suite(tmp_path):
    rep = benchmark(_suite(tmp_path, []))
    assert rep.to_csv() == ",".join(COLUMNS) + "\n"
    assert len(rep.to_markdown().splitlines()) == 2


def test_report_columns():
    assert BenchmarkReport().to_markdown().startswith("| case | busses | blockers | load_met")
