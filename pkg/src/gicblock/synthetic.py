"""Small programmatic cases for tests, property checks and demos.

``chain_case`` lays substations out west to east along a parallel, one
gwye-delta step-up transformer per substation, with a generator behind the
westmost transformer and a load behind every other one. An eastward field
then drives GIC along the chain.
"""

from __future__ import annotations

import copy

from .case import parse_case

KM_PER_DEG_LON_AT_40 = 85.28


def chain_doc(n_subs=3, *, spacing_km=150.0, field=(5.0, 90.0), grounding_r=0.2, kv=500.0,
              r_dc_per_km=0.0116, load_p=1.5, load_q=0.3, gen_pmax=None, gen_qmax=3.0,
              s_max=12.0, xfmr_r=0.3, k_loss=1.8, s_base=600.0, candidate_cost=1.0,
              shed_costs=None):
    """Case document for an east-west chain of ``n_subs`` substations."""
    if n_subs < 2:
        raise ValueError("need at least 2 substations")
    dlon = spacing_km / KM_PER_DEG_LON_AT_40
    subs, busses, branches, xfmrs, loads = [], [], [], [], []
    for k in range(1, n_subs + 1):
        sid = str(k)
        subs.append({"id": sid, "latitude": 40.0, "longitude": -90.0 + (k - 1) * dlon,
                     "grounding_r": grounding_r})
        lo, hi = f"{k}L", f"{k}H"
        busses.append({"id": lo, "base_kv": 20.0, "v_min": 0.9, "v_max": 1.1,
                       "is_slack": k == 1, "substation": sid})
        busses.append({"id": hi, "base_kv": kv, "v_min": 0.9, "v_max": 1.1,
                       "is_slack": False, "substation": sid})
        branches.append({"id": f"X{k}", "from_bus": hi, "to_bus": lo, "g": 2.4938, "b": -49.8753,
                         "b_sh": 0.0, "s_max": s_max, "theta_min": -30.0, "theta_max": 30.0,
                         "status": True, "r_dc_per_phase": None, "kind": "transformer"})
        xfmrs.append({"id": f"T{k}", "config": "gwye-delta", "alpha": kv / 20.0, "beta": None,
                      "winding_r": {"high": xfmr_r}, "grounded": {"high": True, "low": False},
                      "k_loss": k_loss, "s_base": s_base, "high_bus": hi, "low_bus": lo,
                      "tertiary_bus": None, "branch": f"X{k}"})
        if k > 1:
            cost = 1.0 if shed_costs is None else shed_costs[k - 2]
            loads.append({"id": f"D{k}", "bus": lo, "p_d": load_p, "q_d": load_q,
                          "shed_cost": cost, "sheddable": True})
            zb = kv * kv / 100.0
            r, x = 0.018 * spacing_km / zb, 0.33 * spacing_km / zb
            y = 1.0 / complex(r, x)
            branches.append({"id": f"L{k - 1}", "from_bus": f"{k - 1}H", "to_bus": hi,
                             "g": round(y.real, 6), "b": round(y.imag, 6),
                             "b_sh": round(0.009 * spacing_km, 4), "s_max": s_max,
                             "theta_min": -30.0, "theta_max": 30.0, "status": True,
                             "r_dc_per_phase": round(r_dc_per_km * spacing_km, 6), "kind": "line"})
    pmax = gen_pmax if gen_pmax is not None else 2.0 * load_p * (n_subs - 1)
    gens = [{"id": "G1", "bus": "1L", "p_min": 0.0, "p_max": pmax, "q_min": -gen_qmax,
             "q_max": gen_qmax, "cost_c0": 0.0, "cost_c1": 10.0, "cost_c2": 0.1, "status": True,
             "pg": 0.5 * pmax, "vg": 1.02}]
    return {
        "name": f"chain{n_subs}",
        "base_mva": 100.0,
        "allow_gen_without_gsu": False,
        "network": {"substations": subs, "busses": busses, "branches": branches,
                    "transformers": xfmrs, "generators": gens, "loads": loads, "shunts": []},
        "gmd": {"magnitude": field[0], "direction": field[1]},
        "candidates": [{"node": f"n:T{k}", "cost": candidate_cost} for k in range(1, n_subs + 1)],
    }


def chain_case(n_subs=3, **kw):
    return parse_case(chain_doc(n_subs, **kw))


def with_doc_edit(doc, fn):
    """Deep-copy ``doc``, apply ``fn`` to the copy, return the parsed case."""
    d = copy.deepcopy(doc)
    fn(d)
    return parse_case(d)


def random_dc_network(rng, n_nodes, *, g_range=(0.1, 20.0), e_range=(-500.0, 500.0),
                      extra_edges=None, grounded_frac=0.3):
    """Random connected quasi-dc network built directly from nodes and edges.

    A random spanning tree plus ``extra_edges`` chords; every edge carries a
    source drawn from ``e_range`` (V) and a conductance from ``g_range`` (S).
    At least one node is grounded.
    """
    from .dcnet import DcEdge, DcNetwork, DcNode

    lo, hi = g_range
    grounded = rng.random(n_nodes) < grounded_frac
    grounded[rng.integers(n_nodes)] = True
    nodes = tuple(
        DcNode(f"v{i}", "bus-node", "s", float(rng.uniform(lo, hi)) if grounded[i] else 0.0)
        for i in range(n_nodes)
    )
    order = rng.permutation(n_nodes)
    pairs = [(int(order[k]), int(order[rng.integers(k)])) for k in range(1, n_nodes)]
    m = extra_edges if extra_edges is not None else int(rng.integers(0, n_nodes))
    for _ in range(m):
        a, b = rng.choice(n_nodes, 2, replace=False)
        pairs.append((int(a), int(b)))
    edges = tuple(
        DcEdge(f"e{k}", f"v{a}", f"v{b}", float(rng.uniform(lo, hi)), "line", None,
               induced_v=float(rng.uniform(*e_range)))
        for k, (a, b) in enumerate(pairs)
    )
    return DcNetwork(nodes, edges)
