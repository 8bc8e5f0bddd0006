"""Network data model, case-file ingestion and validation.

A case is one JSON document with sections ``network``, ``gmd`` and
``candidates`` (see ``data/case.schema.json``). AC quantities are per-unit on
the system base; dc resistances are ohms per phase; the geoelectric field is
in V/km. Angle limits are degrees on disk and radians in memory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import CaseParseError, CaseValidationError

CONFIGS = ("delta-delta", "gwye-delta", "gwye-gwye", "auto", "three-winding", "other")
GROUNDED_CONFIGS = ("gwye-delta", "gwye-gwye", "auto", "three-winding")

# Busses at or above this nominal voltage count as transmission level for the GSU rule.
TRANSMISSION_KV = 100.0


def bus_node_id(bus_id):
    return f"b:{bus_id}"


def neutral_node_id(transformer_id):
    return f"n:{transformer_id}"


def ground_node_id(substation_id):
    return f"g:{substation_id}"


@dataclass(frozen=True)
class Substation:
    id: str
    latitude: float
    longitude: float
    grounding_r: float | None

    @property
    def grounded(self):
        return self.grounding_r is not None


@dataclass(frozen=True)
class Bus:
    id: str
    base_kv: float
    v_min: float
    v_max: float
    is_slack: bool
    substation: str


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: str
    to_bus: str
    g: float
    b: float
    b_sh: float
    s_max: float
    theta_min: float  # rad
    theta_max: float  # rad
    status: bool
    kind: str
    r_dc_per_phase: float | None = None


@dataclass(frozen=True)
class Transformer:
    id: str
    config: str
    alpha: float
    winding_r: dict
    k_loss: float
    s_base: float
    high_bus: str
    low_bus: str
    beta: float | None = None
    grounded: dict = field(default_factory=dict)
    tertiary_bus: str | None = None
    branch: str | None = None

    @property
    def has_grounded_neutral(self):
        if self.config == "three-winding":
            return any(self.grounded.get(w, True) for w in ("high", "low", "tertiary"))
        return self.config in GROUNDED_CONFIGS

    def __hash__(self):
        return hash(self.id)


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    cost_c0: float
    cost_c1: float
    cost_c2: float
    status: bool
    pg: float = 0.0
    vg: float = 1.0


@dataclass(frozen=True)
class Load:
    id: str
    bus: str
    p_d: float
    q_d: float
    shed_cost: float = 1.0
    sheddable: bool = True


@dataclass(frozen=True)
class Shunt:
    id: str
    bus: str
    g_s: float
    b_s: float
    status: bool


@dataclass(frozen=True)
class GmdField:
    magnitude: float  # V/km
    direction: float  # degrees clockwise from north


@dataclass(frozen=True)
class BlockerCandidate:
    node: str
    cost: float


@dataclass(frozen=True)
class NetworkCase:
    name: str
    substations: tuple
    busses: tuple
    branches: tuple
    transformers: tuple
    generators: tuple
    loads: tuple
    shunts: tuple
    gmd: GmdField | None
    candidates: tuple
    base_mva: float = 100.0
    allow_gen_without_gsu: bool = False

    @cached_property
    def bus(self):
        return {b.id: b for b in self.busses}

    @cached_property
    def substation(self):
        return {s.id: s for s in self.substations}

    @cached_property
    def branch(self):
        return {b.id: b for b in self.branches}

    @cached_property
    def transformer(self):
        return {t.id: t for t in self.transformers}

    def with_field(self, magnitude=None, direction=None):
        gmd = self.gmd or GmdField(0.0, 0.0)
        gmd = GmdField(
            gmd.magnitude if magnitude is None else float(magnitude),
            gmd.direction if direction is None else float(direction),
        )
        return replace(self, gmd=gmd)


# ---------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # ERROR | WARNING
    code: str
    message: str

    def __str__(self):
        return f"{self.severity} {self.code} {self.message}"


def _err(code, msg):
    return Diagnostic("ERROR", code, msg)


def _warn(code, msg):
    return Diagnostic("WARNING", code, msg)


def validate(case):
    """Return every invariant violation of ``case``; an empty list means valid."""
    out = []
    if not case.busses:
        out.append(_err("no-busses", "no busses"))
    subs = case.substation
    busses = case.bus
    branches = case.branch

    for s in case.substations:
        if not abs(s.latitude) <= 90:
            out.append(_err("latitude", f"substation {s.id}: latitude {s.latitude} outside [-90, 90]"))
        if not abs(s.longitude) <= 180:
            out.append(_err("longitude", f"substation {s.id}: longitude {s.longitude} outside [-180, 180]"))
        if s.grounding_r is not None and not s.grounding_r > 0:
            out.append(_err("grounding-r", f"substation {s.id}: grounding_r must be > 0"))

    for b in case.busses:
        if not 0 < b.v_min <= b.v_max:
            out.append(_err("voltage-bounds", f"bus {b.id}: need 0 < v_min <= v_max"))
        if not b.base_kv > 0:
            out.append(_err("base-kv", f"bus {b.id}: base_kv must be > 0"))
        if b.substation not in subs:
            out.append(_err("dangling-ref", f"bus {b.id}: unknown substation {b.substation}"))
    if case.busses and not any(b.is_slack for b in case.busses):
        out.append(_err("no-slack", "no slack bus"))

    for br in case.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in busses:
                out.append(_err("dangling-ref", f"branch {br.id}: unknown bus {end}"))
        if br.from_bus == br.to_bus:
            out.append(_err("self-loop", f"branch {br.id}: from_bus equals to_bus"))
        if not br.s_max > 0:
            out.append(_err("s-max", f"branch {br.id}: s_max must be > 0"))
        if not br.theta_min <= 0 <= br.theta_max:
            out.append(_err("angle-bounds", f"branch {br.id}: need theta_min <= 0 <= theta_max"))
        if br.kind not in ("line", "transformer"):
            out.append(_err("branch-kind", f"branch {br.id}: unknown kind {br.kind!r}"))
        if br.kind == "line" and br.status and not (br.r_dc_per_phase or 0) > 0:
            out.append(_err("r-dc", f"branch {br.id}: in-service line needs r_dc_per_phase > 0"))

    gsu_low = set()
    for t in case.transformers:
        if t.config not in CONFIGS:
            out.append(_err("config", f"transformer {t.id}: unknown config {t.config!r}"))
        if not t.alpha > 0:
            out.append(_err("turns-ratio", f"transformer {t.id}: turns ratio alpha must be > 0"))
        if t.config == "three-winding" and not (t.beta or 0) > 0:
            out.append(_err("turns-ratio", f"transformer {t.id}: three-winding needs beta > 0"))
        if not t.k_loss >= 0:
            out.append(_err("k-loss", f"transformer {t.id}: k_loss must be >= 0"))
        if not t.s_base > 0:
            out.append(_err("s-base", f"transformer {t.id}: s_base must be > 0"))
        ends = [t.high_bus, t.low_bus] + ([t.tertiary_bus] if t.tertiary_bus else [])
        for end in ends:
            if end not in busses:
                out.append(_err("dangling-ref", f"transformer {t.id}: unknown bus {end}"))
        if t.config == "three-winding" and not t.tertiary_bus:
            out.append(_err("tertiary", f"transformer {t.id}: three-winding needs tertiary_bus"))
        if t.branch is not None and t.branch not in branches:
            out.append(_err("dangling-ref", f"transformer {t.id}: unknown branch {t.branch}"))
        needed = {
            "gwye-delta": ("high",),
            "gwye-gwye": ("high", "low"),
            "auto": ("series", "common"),
            "three-winding": tuple(
                w for w in ("high", "low", "tertiary") if t.grounded.get(w, True)
            ),
        }.get(t.config, ())
        for w in needed:
            if not t.winding_r.get(w, 0) > 0:
                out.append(_err("winding-r", f"transformer {t.id}: winding_r[{w}] must be > 0"))
        if t.has_grounded_neutral and t.high_bus in busses:
            sub = subs.get(busses[t.high_bus].substation)
            if sub is not None and not sub.grounded:
                out.append(
                    _err("ungrounded-neutral",
                         f"transformer {t.id}: grounded neutral at ungrounded substation {sub.id}")
                )
        gsu_low.add(t.low_bus)
        if t.tertiary_bus:
            gsu_low.add(t.tertiary_bus)

    for g in case.generators:
        if g.bus not in busses:
            out.append(_err("dangling-ref", f"generator {g.id}: unknown bus {g.bus}"))
            continue
        if not g.p_min <= g.p_max:
            out.append(_err("gen-p-bounds", f"generator {g.id}: p_min > p_max"))
        if not g.q_min <= g.q_max:
            out.append(_err("gen-q-bounds", f"generator {g.id}: q_min > q_max"))
        if (
            busses[g.bus].base_kv >= TRANSMISSION_KV
            and g.bus not in gsu_low
            and not case.allow_gen_without_gsu
        ):
            out.append(
                _err("missing-gsu",
                     f"generator {g.id}: on transmission bus {g.bus} without a step-up transformer")
            )
    for d in case.loads:
        if d.bus not in busses:
            out.append(_err("dangling-ref", f"load {d.id}: unknown bus {d.bus}"))
        if not d.shed_cost >= 0:
            out.append(_err("shed-cost", f"load {d.id}: shed_cost must be >= 0"))
    for s in case.shunts:
        if s.bus not in busses:
            out.append(_err("dangling-ref", f"shunt {s.id}: unknown bus {s.bus}"))

    if case.gmd is None:
        out.append(_err("missing-gmd", "missing gmd section"))
    else:
        if not case.gmd.magnitude >= 0:
            out.append(_err("field-magnitude", "gmd magnitude must be >= 0"))
        if not 0 <= case.gmd.direction < 360:
            out.append(_err("field-direction", "gmd direction must lie in [0, 360)"))

    neutrals = set()
    for t in case.transformers:
        if t.has_grounded_neutral and t.high_bus in busses:
            sub = subs.get(busses[t.high_bus].substation)
            if sub is not None and sub.grounded:
                neutrals.add(neutral_node_id(t.id))
    seen = set()
    for c in case.candidates:
        if not c.cost > 0:
            out.append(_err("candidate-cost", f"candidate {c.node}: cost must be > 0"))
        if c.node not in neutrals:
            out.append(_err("candidate-node", f"candidate {c.node}: not a grounded transformer neutral"))
        if c.node in seen:
            out.append(_err("candidate-dup", f"candidate {c.node}: listed twice"))
        seen.add(c.node)

    if case.busses and not neutrals:
        out.append(_warn("no-ground-path", "no ground return path"))
    return out


# ------------------------------------------------------------------ file I/O


@dataclass(frozen=True)
class _Section:
    key: str
    cls: type
    label: str


_SECTIONS = (
    _Section("substations", Substation, "substation"),
    _Section("busses", Bus, "bus"),
    _Section("branches", Branch, "branch"),
    _Section("transformers", Transformer, "transformer"),
    _Section("generators", Generator, "generator"),
    _Section("loads", Load, "load"),
    _Section("shunts", Shunt, "shunt"),
)


def _schema():
    text = resources.files("gicblock").joinpath("data/case.schema.json").read_text("utf-8")
    return json.loads(text)


def _schema_error(doc, err):
    path = list(err.absolute_path)
    where = "/".join(str(p) for p in path) or "<root>"
    record = ""
    # Name the offending record by id when the error sits inside a list item.
    node = doc
    for p in path:
        try:
            node = node[p]
        except (KeyError, IndexError, TypeError):
            break
        if isinstance(node, dict) and "id" in node:
            record = f" (record id={node['id']})"
    fieldname = path[-1] if path and isinstance(path[-1], str) else None
    if err.validator == "required":
        fieldname = err.message.split("'")[1] if "'" in err.message else fieldname
    return CaseParseError(f"schema violation at {where}{record}: field {fieldname!r}: {err.message}")


def parse_case(doc):
    """Build a NetworkCase from a decoded JSON document (schema-checked, not validated)."""
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise _schema_error(doc, errors[0])
    net = doc["network"]
    parts = {}
    for sec in _SECTIONS:
        items = []
        for rec in net.get(sec.key, []):
            rec = dict(rec)
            if sec.cls is Branch:
                rec["theta_min"] = math.radians(rec["theta_min"])
                rec["theta_max"] = math.radians(rec["theta_max"])
            if sec.cls is Transformer:
                rec["winding_r"] = dict(rec.get("winding_r", {}))
                rec["grounded"] = dict(rec.get("grounded", {}))
            items.append(sec.cls(**rec))
        parts[sec.key] = tuple(items)
    gmd = GmdField(**doc["gmd"]) if doc.get("gmd") is not None else None
    cands = tuple(BlockerCandidate(**c) for c in doc.get("candidates", []))
    return NetworkCase(
        name=doc["name"],
        gmd=gmd,
        candidates=cands,
        base_mva=doc.get("base_mva", 100.0),
        allow_gen_without_gsu=doc.get("allow_gen_without_gsu", False),
        **parts,
    )


def load_case(path):
    """Read, schema-check and validate a case file. Warnings do not raise."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise CaseParseError(f"case file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"{path}: invalid JSON: {exc}") from None
    if isinstance(doc, dict) and "gmd" not in doc:
        raise CaseValidationError(f"{path}: missing gmd section",
                                  [_err("missing-gmd", "missing gmd section")])
    case = parse_case(doc)
    diags = validate(case)
    errors = [d for d in diags if d.severity == "ERROR"]
    if errors:
        raise CaseValidationError(
            f"{path}: " + "; ".join(d.message for d in errors), diags
        )
    return case


def case_to_dict(case):
    net = {}
    for sec in _SECTIONS:
        rows = []
        for obj in getattr(case, sec.key):
            rec = {f.name: getattr(obj, f.name) for f in fields(obj)}
            if sec.cls is Branch:
                rec["theta_min"] = math.degrees(rec["theta_min"])
                rec["theta_max"] = math.degrees(rec["theta_max"])
            if sec.cls is Transformer:
                rec["winding_r"] = dict(rec["winding_r"])
                rec["grounded"] = dict(rec["grounded"])
            rows.append(rec)
        net[sec.key] = rows
    return {
        "name": case.name,
        "base_mva": case.base_mva,
        "allow_gen_without_gsu": case.allow_gen_without_gsu,
        "network": net,
        "gmd": None if case.gmd is None else {
            "magnitude": case.gmd.magnitude, "direction": case.gmd.direction},
        "candidates": [{"node": c.node, "cost": c.cost} for c in case.candidates],
    }


def serialize(case):
    return json.dumps(case_to_dict(case), indent=1)


def bundled_case_path(name):
    """Path of a case shipped in ``gicblock/data/cases`` (``name`` without suffix)."""
    return Path(str(resources.files("gicblock").joinpath(f"data/cases/{name}.json")))


def load_bundled(name):
    return load_case(bundled_case_path(name))
