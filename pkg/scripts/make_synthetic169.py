"""Write a synthetic 169-bus, 98-candidate case for the optional long benchmark.

This is NOT the published UIUC 150-bus case. It is a stand-in of the same
size class: 71 substations on a jittered grid over Illinois, one 345 kV bus
each, and 98 gwye-delta step-up transformers (27 substations hold two) each
feeding its own 20 kV bus with either a generator or a load. Every
transformer neutral is a blocker candidate.

    python3 scripts/make_synthetic169.py [--out PATH] [--seed N]
"""

from __future__ import annotations

import argparse
import json
import math
from pathlib import Path

import numpy as np

N_SUBS = 71
N_DOUBLE = 27
KV_HV, KV_LV = 345.0, 20.0
R_DC_KM, R_KM, X_KM, B_KM = 0.0185, 0.030, 0.37, 0.0042
FIELD = (2.0, 90.0)


def _km(a, b):
    la = math.radians(0.5 * (a[0] + b[0]))
    dy = 111.2 * (b[0] - a[0])
    dx = 111.2 * math.cos(la) * (b[1] - a[1])
    return math.hypot(dx, dy)


def build(seed=150):
    rng = np.random.default_rng(seed)
    cols = 9
    pos = []
    for k in range(N_SUBS):
        r, c = divmod(k, cols)
        pos.append((37.5 + 0.55 * r + rng.uniform(-0.12, 0.12),
                    -91.0 + 0.65 * c + rng.uniform(-0.15, 0.15)))
    subs = [{"id": str(k + 1), "latitude": round(la, 4), "longitude": round(lo, 4),
             "grounding_r": round(float(rng.uniform(0.1, 0.5)), 3)} for k, (la, lo) in enumerate(pos)]
    busses, branches, xfmrs, gens, loads = [], [], [], [], []
    for k in range(N_SUBS):
        busses.append({"id": f"{k + 1}H", "base_kv": KV_HV, "v_min": 0.9, "v_max": 1.1,
                       "is_slack": False, "substation": str(k + 1)})
    # grid lines: east and north neighbours plus a sprinkling of diagonals
    pairs = []
    for k in range(N_SUBS):
        r, c = divmod(k, cols)
        if c + 1 < cols and k + 1 < N_SUBS:
            pairs.append((k, k + 1))
        if k + cols < N_SUBS:
            pairs.append((k, k + cols))
        if c + 1 < cols and k + cols + 1 < N_SUBS and rng.random() < 0.15:
            pairs.append((k, k + cols + 1))
    zb = KV_HV * KV_HV / 100.0
    for n, (a, b) in enumerate(pairs, 1):
        km = _km(pos[a], pos[b])
        y = 1.0 / complex(R_KM * km / zb, X_KM * km / zb)
        branches.append({"id": f"L{n}", "from_bus": f"{a + 1}H", "to_bus": f"{b + 1}H",
                         "g": round(y.real, 6), "b": round(y.imag, 6), "b_sh": round(B_KM * km, 4),
                         "s_max": 15.0, "theta_min": -30.0, "theta_max": 30.0, "status": True,
                         "r_dc_per_phase": round(R_DC_KM * km, 6), "kind": "line"})
    # transformer slots: the first N_DOUBLE substations (in shuffled order) get two
    doubles = set(rng.permutation(N_SUBS)[:N_DOUBLE].tolist())
    slots = [(k, j) for k in range(N_SUBS) for j in range(2 if k in doubles else 1)]
    gen_slots = set(rng.choice(len(slots), 22, replace=False).tolist())
    first_gen = min(gen_slots)
    for t, (k, j) in enumerate(slots, 1):
        lo, hi = f"{k + 1}L{'ab'[j]}", f"{k + 1}H"
        busses.append({"id": lo, "base_kv": KV_LV, "v_min": 0.9, "v_max": 1.1,
                       "is_slack": t - 1 == first_gen, "substation": str(k + 1)})
        branches.append({"id": f"X{t}", "from_bus": hi, "to_bus": lo, "g": 1.2, "b": -40.0,
                         "b_sh": 0.0, "s_max": 15.0, "theta_min": -30.0, "theta_max": 30.0,
                         "status": True, "r_dc_per_phase": None, "kind": "transformer"})
        xfmrs.append({"id": f"T{t}", "config": "gwye-delta", "alpha": KV_HV / KV_LV, "beta": None,
                      "winding_r": {"high": round(float(rng.uniform(0.2, 0.5)), 3)},
                      "grounded": {"high": True, "low": False}, "k_loss": 1.8, "s_base": 600.0,
                      "high_bus": hi, "low_bus": lo, "tertiary_bus": None, "branch": f"X{t}"})
        if t - 1 in gen_slots:
            gens.append({"id": f"G{t}", "bus": lo, "p_min": 0.0, "p_max": 6.0, "q_min": -3.0,
                         "q_max": 4.0, "cost_c0": 0.0, "cost_c1": float(round(rng.uniform(8, 20), 2)),
                         "cost_c2": 0.05, "status": True, "pg": 2.0, "vg": 1.02})
        else:
            loads.append({"id": f"D{t}", "bus": lo, "p_d": round(float(rng.uniform(0.6, 1.6)), 3),
                          "q_d": round(float(rng.uniform(0.1, 0.4)), 3), "shed_cost": 1.0,
                          "sheddable": True})
    # dispatch covers the load so the slack only picks up losses
    share = round(1.02 * sum(d["p_d"] for d in loads) / len(gens), 3)
    for g in gens:
        g["pg"] = share
    return {
        "name": "synthetic169",
        "base_mva": 100.0,
        "allow_gen_without_gsu": False,
        "network": {"substations": subs, "busses": busses, "branches": branches,
                    "transformers": xfmrs, "generators": gens, "loads": loads, "shunts": []},
        "gmd": {"magnitude": FIELD[0], "direction": FIELD[1]},
        "candidates": [{"node": f"n:{x['id']}", "cost": 1.0} for x in xfmrs],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    default = Path(__file__).resolve().parents[1] / "src/gicblock/data/cases/synthetic169.json"
    ap.add_argument("--out", default=str(default))
    ap.add_argument("--seed", type=int, default=150)
    args = ap.parse_args(argv)
    doc = build(args.seed)
    Path(args.out).write_text(json.dumps(doc, indent=1) + "\n", "utf-8")
    n = doc["network"]
    print(f"wrote {args.out}: {len(n['busses'])} busses, {len(doc['candidates'])} candidates")


if __name__ == "__main__":
    main()
