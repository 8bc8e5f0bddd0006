import copy
import dataclasses
import json
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from gicblock import acopf, case as cm, dcnet, gic, placement
from gicblock.case import (
    bundled_case_path,
    case_to_dict,
    load_bundled,
    load_case,
    parse_case,
    serialize,
    validate,
)
from gicblock.errors import CaseParseError, CaseValidationError
from gicblock.synthetic import chain_doc

HERE = Path(__file__).parent


def _doc(name="b4gic"):
    return json.loads(bundled_case_path(name).read_text())


def _write(tmp_path, doc):
    p = tmp_path / "case.json"
    p.write_text(json.dumps(doc))
    return p


def test_b4gic_shape(b4gic):
    assert len(b4gic.busses) == 4
    assert len(b4gic.candidates) == 2
    assert validate(b4gic) == []


def test_epri21_shape(epri21):
    assert len(epri21.busses) == 20
    assert len(epri21.substations) == 8
    assert len(epri21.candidates) == 8
    assert validate(epri21) == []


def test_synthetic169_shape():
    c = load_bundled("synthetic169")
    assert len(c.busses) == 169 and len(c.candidates) == 98
    assert validate(c) == []


@pytest.mark.parametrize("name", ["b4gic", "epri21", "synthetic169"])
def test_round_trip(name):
    c = load_case(bundled_case_path(name))
    again = parse_case(json.loads(serialize(c)))
    for f in dataclasses.fields(c):
        assert getattr(again, f.name) == getattr(c, f.name), f.name


@given(st.integers(2, 6), st.floats(0, 20), st.floats(0, 359.9))
def test_round_trip_synthetic(n, mag, direction):
    c = parse_case(chain_doc(n, field=(mag, direction)))
    assert parse_case(case_to_dict(c)) == c


def test_angles_converted(b4gic):
    assert b4gic.branch["2"].theta_max == pytest.approx(0.5235987755982988)


def test_validate_pure(b4gic):
    bad = dataclasses.replace(b4gic, busses=())
    assert validate(bad) == validate(bad)
    assert validate(b4gic) == validate(b4gic)


def test_empty_bus_list(tmp_path):
    doc = _doc()
    doc["network"]["busses"] = []
    with pytest.raises(CaseValidationError, match="no busses"):
        load_case(_write(tmp_path, doc))


def test_dangling_branch_names_branch(tmp_path):
    doc = _doc()
    doc["network"]["branches"][1]["to_bus"] = "99"
    with pytest.raises(CaseValidationError) as exc:
        load_case(_write(tmp_path, doc))
    assert "branch 2" in str(exc.value)
    assert any(d.code == "dangling-ref" for d in exc.value.diagnostics)


def test_missing_gmd(tmp_path):
    doc = _doc()
    del doc["gmd"]
    with pytest.raises(CaseValidationError, match="gmd"):
        load_case(_write(tmp_path, doc))


def test_schema_violation_names_field_and_record(tmp_path):
    doc = _doc()
    doc["network"]["busses"][2]["base_kv"] = "high"
    with pytest.raises(CaseParseError) as exc:
        load_case(_write(tmp_path, doc))
    assert "base_kv" in str(exc.value) and "id=3" in str(exc.value)


def test_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(CaseParseError):
        load_case(p)
    with pytest.raises(CaseParseError):
        load_case(tmp_path / "absent.json")


def test_zero_turns_ratio(b4gic):
    t = dataclasses.replace(b4gic.transformers[0], alpha=0.0)
    c = dataclasses.replace(b4gic, transformers=(t,) + b4gic.transformers[1:])
    assert [d.code for d in validate(c)] == ["turns-ratio"]


def test_ungrounded_network_warns():
    doc = chain_doc(3)
    for s in doc["network"]["substations"]:
        s["grounding_r"] = None
    for t in doc["network"]["transformers"]:
        t["config"] = "delta-delta"
    doc["candidates"] = []
    diags = validate(parse_case(doc))
    assert [(d.severity, d.message) for d in diags] == [("WARNING", "no ground return path")]


def test_invariant_violations_reported():
    doc = chain_doc(2)
    doc["network"]["busses"][0]["v_min"] = 1.2
    doc["network"]["branches"][0]["s_max"] = 0.0
    doc["network"]["substations"][0]["latitude"] = 95.0
    doc["candidates"].append({"node": "n:T9", "cost": 1.0})
    doc["candidates"].append({"node": "n:T1", "cost": 1.0})
    codes = {d.code for d in validate(parse_case(doc))}
    assert {"voltage-bounds", "s-max", "latitude", "candidate-node", "candidate-dup"} <= codes


def test_gsu_rule():
    doc = chain_doc(2)
    doc["network"]["generators"][0]["bus"] = "1H"
    assert "missing-gsu" in {d.code for d in validate(parse_case(doc))}
    doc["allow_gen_without_gsu"] = True
    assert validate(parse_case(doc)) == []


def test_with_field_leaves_original(b4gic):
    c = b4gic.with_field(magnitude=0.0)
    assert c.gmd.magnitude == 0.0 and b4gic.gmd.magnitude == 8.0


# symbol table ---------------------------------------------------------------

_TYPES = {
    "NetworkCase": cm.NetworkCase,
    "Bus": cm.Bus,
    "Branch": cm.Branch,
    "Transformer": cm.Transformer,
    "Substation": cm.Substation,
    "Generator": cm.Generator,
    "Load": cm.Load,
    "Shunt": cm.Shunt,
    "GmdField": cm.GmdField,
    "BlockerCandidate": cm.BlockerCandidate,
    "DcNetwork": dcnet.DcNetwork,
    "DcNode": dcnet.DcNode,
    "DcEdge": dcnet.DcEdge,
    "GicSolution": gic.GicSolution,
    "AcSolution": acopf.AcSolution,
    "PlacementProblem": placement.PlacementProblem,
    "PlacementSolution": placement.PlacementSolution,
}


def test_symbol_table_resolves():
    table = json.loads((HERE / "symbols.json").read_text())
    covered = set()
    for entry in table["symbols"]:
        cls = _TYPES[entry["type"]]
        names = {f.name for f in dataclasses.fields(cls)} | set(dir(cls))
        assert entry["attr"] in names, entry
        covered.update(entry["roles"])
    assert covered == set(table["roles"])
    assert len(table["roles"]) == 19
