"""Write the bundled 20-bus, 8-substation EPRI21-scale case.

Substation coordinates and grounding resistances approximate the public
EPRI GIC benchmark (8 substations across Alabama, Georgia and the
Carolinas). Bus voltage levels, transformer configurations and the dc
resistances follow the benchmark's layout; the AC data (impedances,
generator limits, loads) are not published with the dc benchmark and are
synthesized here from per-km line constants. See README "Bundled cases".

    python3 scripts/make_epri21.py [--out PATH]
"""

from __future__ import annotations

import argparse
import json
import math
from pathlib import Path

R_EARTH = 6371.0

SUBSTATIONS = [
    # id, lat, lon, grounding resistance (ohm)
    ("1", 33.6135, -87.3737, 0.20),
    ("2", 34.3104, -86.3658, 0.20),
    ("3", 33.9551, -84.6794, 0.20),
    ("4", 33.5479, -86.0746, 1.00),
    ("5", 32.7051, -84.6634, 0.10),
    ("6", 33.3773, -82.6188, 0.10),
    ("7", 34.2522, -82.8363, 0.22),
    ("8", 34.1956, -80.9830, 0.10),
]

BUSSES = [
    # id, kV, substation
    ("1", 22.0, "1"), ("2", 500.0, "1"),
    ("3", 345.0, "2"), ("4", 500.0, "2"), ("5", 22.0, "2"),
    ("6", 500.0, "3"), ("7", 22.0, "3"),
    ("8", 500.0, "4"), ("9", 22.0, "4"),
    ("10", 345.0, "5"), ("11", 500.0, "5"), ("12", 22.0, "5"),
    ("13", 345.0, "6"), ("14", 500.0, "6"), ("15", 22.0, "6"),
    ("16", 500.0, "7"), ("17", 22.0, "7"),
    ("18", 345.0, "8"), ("19", 22.0, "8"), ("20", 22.0, "8"),
]

LINES = [("2", "4"), ("4", "6"), ("2", "8"), ("8", "11"), ("6", "11"), ("6", "16"),
         ("11", "14"), ("14", "16"), ("3", "10"), ("10", "13"), ("13", "18")]

# per-km constants by voltage: r_dc per phase (ohm), series r, x (ohm), charging (pu on 100 MVA)
LINE_KM = {500.0: (0.0116, 0.018, 0.33, 0.0090), 345.0: (0.0185, 0.030, 0.37, 0.0042)}

TRANSFORMERS = [
    # id, config, high, low, winding r (ohm/phase), x pu (100 MVA), s_base MVA
    ("T1", "gwye-delta", "2", "1", {"high": 0.30}, 0.012, 1000.0),
    ("T2", "auto", "4", "3", {"series": 0.20, "common": 0.15}, 0.010, 1000.0),
    ("T3", "gwye-gwye", "3", "5", {"high": 0.40, "low": 0.02}, 0.020, 600.0),
    ("T4", "gwye-delta", "6", "7", {"high": 0.35}, 0.016, 700.0),
    ("T5", "gwye-delta", "8", "9", {"high": 0.30}, 0.016, 700.0),
    ("T6", "auto", "11", "10", {"series": 0.20, "common": 0.15}, 0.010, 1000.0),
    ("T7", "gwye-delta", "10", "12", {"high": 0.45}, 0.020, 600.0),
    ("T8", "auto", "14", "13", {"series": 0.20, "common": 0.15}, 0.010, 1000.0),
    ("T9", "gwye-delta", "14", "15", {"high": 0.30}, 0.014, 800.0),
    ("T10", "gwye-delta", "16", "17", {"high": 0.35}, 0.016, 700.0),
    ("T11", "gwye-delta", "18", "19", {"high": 0.45}, 0.020, 600.0),
    ("T12", "gwye-delta", "18", "20", {"high": 0.40}, 0.016, 700.0),
]

GENERATORS = [
    # id, bus, p_max, q_min, q_max, c1, c2, pg setpoint, vg setpoint
    ("1", "1", 10.0, -3.0, 5.0, 12.0, 0.02, 6.0, 1.03),
    ("2", "9", 6.0, -2.0, 3.0, 14.0, 0.03, 4.0, 1.02),
    ("3", "15", 6.0, -2.0, 3.0, 13.0, 0.03, 4.0, 1.02),
    ("4", "20", 5.0, -2.0, 2.5, 15.0, 0.04, 3.0, 1.02),
]

LOADS = [
    # id, bus, p, q
    ("1", "5", 3.0, 0.8),
    ("2", "7", 3.6, 1.0),
    ("3", "12", 4.2, 1.2),
    ("4", "17", 3.2, 0.9),
    ("5", "19", 2.8, 0.8),
]

FIELD = {"magnitude": 2.15, "direction": 45.0}


def _y(r, x):
    z = complex(r, x)
    y = 1.0 / z
    return round(y.real, 6), round(y.imag, 6)


def _length_km(s0, s1):
    lat0, lon0 = math.radians(s0[1]), math.radians(s0[2])
    lat1, lon1 = math.radians(s1[1]), math.radians(s1[2])
    dn = R_EARTH * (lat1 - lat0)
    de = R_EARTH * (lon1 - lon0) * math.cos(0.5 * (lat0 + lat1))
    return math.hypot(dn, de)


def _main_transformers():
    """First listed transformer of each substation: one blocker site per substation."""
    seen = {}
    for tid, _cfg, hi, *_ in TRANSFORMERS:
        seen.setdefault(dict((b[0], b[2]) for b in BUSSES)[hi], tid)
    return [seen[s[0]] for s in SUBSTATIONS]


def build(field=None):
    subs = {s[0]: s for s in SUBSTATIONS}
    bus = {b[0]: b for b in BUSSES}
    branches = []
    for k, (f, t) in enumerate(LINES, start=1):
        kv = bus[f][1]
        r_dc, r, x, bsh = LINE_KM[kv]
        km = _length_km(subs[bus[f][2]], subs[bus[t][2]])
        zb = kv * kv / 100.0
        g, b = _y(r * km / zb, x * km / zb)
        branches.append({
            "id": f"L{k}", "from_bus": f, "to_bus": t, "g": g, "b": b,
            "b_sh": round(bsh * km, 4), "s_max": 25.0, "theta_min": -30.0, "theta_max": 30.0,
            "status": True, "r_dc_per_phase": round(r_dc * km, 4), "kind": "line",
        })
    transformers = []
    for tid, cfg, hi, lo, wr, x, sb in TRANSFORMERS:
        g, b = _y(x / 20.0, x)
        branches.append({
            "id": tid, "from_bus": hi, "to_bus": lo, "g": g, "b": b, "b_sh": 0.0,
            "s_max": 25.0, "theta_min": -30.0, "theta_max": 30.0, "status": True,
            "r_dc_per_phase": None, "kind": "transformer",
        })
        grounded = {"auto": {},
                    "gwye-gwye": {"high": True, "low": True}}.get(cfg, {"high": True, "low": False})
        transformers.append({
            "id": tid, "config": cfg, "alpha": round(bus[hi][1] / bus[lo][1], 6), "beta": None,
            "winding_r": wr, "grounded": grounded, "k_loss": 1.8, "s_base": sb,
            "high_bus": hi, "low_bus": lo, "tertiary_bus": None, "branch": tid,
        })
    doc = {
        "name": "epri21",
        "base_mva": 100.0,
        "allow_gen_without_gsu": False,
        "network": {
            "substations": [{"id": s, "latitude": la, "longitude": lo, "grounding_r": r}
                            for s, la, lo, r in SUBSTATIONS],
            "busses": [{"id": b, "base_kv": kv, "v_min": 0.9, "v_max": 1.1, "is_slack": b == "1",
                        "substation": s} for b, kv, s in BUSSES],
            "branches": branches,
            "transformers": transformers,
            "generators": [{"id": g, "bus": b, "p_min": 0.0, "p_max": pm, "q_min": qn, "q_max": qx,
                            "cost_c0": 0.0, "cost_c1": c1, "cost_c2": c2, "status": True,
                            "pg": pg, "vg": vg}
                           for g, b, pm, qn, qx, c1, c2, pg, vg in GENERATORS],
            "loads": [{"id": d, "bus": b, "p_d": p, "q_d": q, "shed_cost": 1.0, "sheddable": True}
                      for d, b, p, q in LOADS],
            "shunts": [],
        },
        "gmd": dict(field or FIELD),
        "candidates": [{"node": f"n:{t}", "cost": 1.0} for t in _main_transformers()],
    }
    return doc


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    default = Path(__file__).resolve().parents[1] / "src/gicblock/data/cases/epri21.json"
    ap.add_argument("--out", type=Path, default=default)
    args = ap.parse_args(argv)
    args.out.write_text(json.dumps(build(), indent=1) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
