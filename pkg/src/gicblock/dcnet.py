"""Quasi-dc network construction.

Inductances are shorts and capacitances are opens, so line charging and
shunts produce no dc edges. Each grounded transformer gets its own neutral
node. A substation with a single grounded transformer grounds that neutral
directly; with several, every neutral ties through an ideal lead to a shared
substation ground node, which carries the grounding conductance. A blocker
opens the lead (or the direct grounding). Edge conductances use three phases
in parallel (3 / r_per_phase), so edge currents are three-phase totals.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .case import CONFIGS, bus_node_id, ground_node_id, neutral_node_id
from .errors import DcBuildError


@dataclass(frozen=True)
class DcNode:
    id: str
    kind: str  # bus-node | neutral-node | ground-node
    substation: str
    grounding_g: float = 0.0  # S to remote earth
    blocker_cost: float | None = None  # set when the neutral is a blocker candidate
    transformer: str | None = None  # owner of a neutral node
    ground: str | None = None  # shared ground node a neutral's lead ties to

    @property
    def is_candidate(self):
        return self.blocker_cost is not None


@dataclass(frozen=True)
class DcEdge:
    id: str
    from_node: str
    to_node: str
    conductance: float
    kind: str
    ac_link: str | None  # ac branch whose status gates this edge
    transformer: str | None = None
    induced_v: float = 0.0
    in_service: bool = True


@dataclass(frozen=True)
class DcNetwork:
    nodes: tuple
    edges: tuple
    # transformer id -> {winding name: edge index}
    windings: dict = field(default_factory=dict)
    # line edge id -> (from Substation, to Substation)
    line_ends: dict = field(default_factory=dict)

    @cached_property
    def node_index(self):
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def edge_index(self):
        return {e.id: i for i, e in enumerate(self.edges)}

    @cached_property
    def node(self):
        return {n.id: n for n in self.nodes}

    @cached_property
    def leads(self):
        """Neutral id -> shared ground node id, for neutrals tied through a lead."""
        return {n.id: n.ground for n in self.nodes if n.ground is not None}

    def incidence(self):
        """(from_idx, to_idx, conductance, induced_v, active) arrays over edges."""
        idx = self.node_index
        f = np.array([idx[e.from_node] for e in self.edges], dtype=int)
        t = np.array([idx[e.to_node] for e in self.edges], dtype=int)
        a = np.array([e.conductance for e in self.edges], dtype=float)
        ev = np.array([e.induced_v for e in self.edges], dtype=float)
        on = np.array([e.in_service for e in self.edges], dtype=bool)
        return f, t, a, ev, on


_TOPOLOGY = {
    # winding name -> (edge kind, from end, to end); "N" is the neutral
    "delta-delta": (),
    "other": (),
    "gwye-delta": (("high", "winding-high", "H", "N"),),
    "gwye-gwye": (("high", "winding-high", "H", "N"), ("low", "winding-low", "L", "N")),
    "auto": (("series", "winding-series", "H", "L"), ("common", "winding-common", "L", "N")),
    "three-winding": (
        ("high", "winding-high", "H", "N"),
        ("low", "winding-low", "L", "N"),
        ("tertiary", "winding-tertiary", "T", "N"),
    ),
}


def build_dc_network(case):
    """Derive the quasi-dc network of ``case``. Pure; node and edge order is deterministic."""
    subs = case.substation
    busses = case.bus
    branches = case.branch
    cand_cost = {c.node: c.cost for c in case.candidates}

    edges = []
    windings = {}
    line_ends = {}
    neutrals = []  # (transformer id, substation id) in case order
    touched = set()

    for br in case.branches:
        if br.kind != "line":
            continue
        if br.status and not (br.r_dc_per_phase or 0) > 0:
            raise DcBuildError(f"line {br.id}: r_dc_per_phase must be > 0")
        g = 3.0 / br.r_dc_per_phase if br.r_dc_per_phase else 0.0
        edges.append(
            DcEdge(
                id=f"line:{br.id}",
                from_node=bus_node_id(br.from_bus),
                to_node=bus_node_id(br.to_bus),
                conductance=g,
                kind="line",
                ac_link=br.id,
                in_service=bool(br.status) and g > 0,
            )
        )
        touched.update((br.from_bus, br.to_bus))
        if br.from_bus in busses and br.to_bus in busses:
            line_ends[edges[-1].id] = (
                subs.get(busses[br.from_bus].substation),
                subs.get(busses[br.to_bus].substation),
            )

    for t in case.transformers:
        if t.config not in CONFIGS:
            raise DcBuildError(f"transformer {t.id}: unknown config {t.config!r}")
        spec = _TOPOLOGY[t.config]
        if t.config == "three-winding":
            spec = tuple(s for s in spec if t.grounded.get(s[0], True))
        if not spec:
            windings[t.id] = {}
            continue
        sub = subs[busses[t.high_bus].substation]
        ends = {"H": t.high_bus, "L": t.low_bus, "T": t.tertiary_bus}
        if any(s[3] == "N" for s in spec):
            if not sub.grounded:
                raise DcBuildError(
                    f"transformer {t.id}: grounded neutral at ungrounded substation {sub.id}"
                )
            neutrals.append((t.id, sub.id))
        in_service = True if t.branch is None else bool(branches[t.branch].status)
        wmap = {}
        for wname, kind, a, b in spec:
            r = t.winding_r.get(wname)
            if not r or r <= 0:
                raise DcBuildError(f"transformer {t.id}: winding_r[{wname}] must be > 0")

            def node(end):
                if end == "N":
                    return neutral_node_id(t.id)
                touched.add(ends[end])
                return bus_node_id(ends[end])

            wmap[wname] = len(edges)
            edges.append(
                DcEdge(
                    id=f"{kind}:{t.id}",
                    from_node=node(a),
                    to_node=node(b),
                    conductance=3.0 / r,
                    kind=kind,
                    ac_link=t.branch,
                    transformer=t.id,
                    in_service=in_service,
                )
            )
        windings[t.id] = wmap

    per_sub = {}
    for tid, sid in neutrals:
        per_sub.setdefault(sid, []).append(tid)
    nodes = [DcNode(bus_node_id(b.id), "bus-node", b.substation)
             for b in case.busses if b.id in touched]
    for tid, sid in neutrals:
        nid = neutral_node_id(tid)
        g = 1.0 / subs[sid].grounding_r
        if len(per_sub[sid]) == 1:
            nodes.append(DcNode(nid, "neutral-node", sid, g, cand_cost.get(nid), tid))
        else:
            nodes.append(DcNode(nid, "neutral-node", sid, 0.0, cand_cost.get(nid), tid,
                                ground_node_id(sid)))
    for sid in sorted(per_sub, key=natural_key):
        if len(per_sub[sid]) > 1:
            nodes.append(DcNode(ground_node_id(sid), "ground-node", sid,
                                1.0 / subs[sid].grounding_r))
    known = {n.id for n in nodes if n.kind == "neutral-node"}
    for nid in cand_cost:
        if nid not in known:
            raise DcBuildError(f"candidate {nid}: not a grounded transformer neutral")
    return DcNetwork(tuple(nodes), tuple(edges), windings, line_ends)


def natural_key(s):
    """Sort key treating digit runs numerically: T2 < T10, 9 < 10."""
    return tuple((0, int(p), "") if p.isdigit() else (1, 0, p) for p in re.findall(r"\d+|\D+", s))


def candidate_neutrals(net):
    """Neutral nodes that are blocker candidates, ordered by id (digit runs numerically)."""
    return sorted((n for n in net.nodes if n.is_candidate), key=lambda n: natural_key(n.id))


def nodal_matrix(net, blocked=frozenset(), dense=False):
    """Grounded nodal conductance matrix and source vector over all nodes.

    Row i balances currents leaving node i through edges against
    (1 - z_i) g_i V_i; blocked neutrals drop their grounding term. Ideal
    leads are not represented here; see ``reduced_system``.
    """
    n = len(net.nodes)
    f, t, a, ev, on = net.incidence()
    f, t, a, ev = f[on], t[on], a[on], ev[on]
    rows = np.concatenate([f, t, f, t])
    cols = np.concatenate([f, t, t, f])
    vals = np.concatenate([a, a, -a, -a])
    gdiag = grounding_vector(net, blocked)
    rows = np.concatenate([rows, np.arange(n)])
    cols = np.concatenate([cols, np.arange(n)])
    vals = np.concatenate([vals, gdiag])
    G = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    J = np.zeros(n)
    np.add.at(J, t, a * ev)
    np.add.at(J, f, -a * ev)
    return (G.toarray() if dense else G), J


def grounding_vector(net, blocked=frozenset()):
    return np.array([0.0 if nd.id in blocked else nd.grounding_g for nd in net.nodes], dtype=float)


def merge_map(net, blocked=frozenset()):
    """P with V_full = P @ V_reduced: each unblocked lead merges its neutral into the ground node."""
    idx = net.node_index
    rep = list(range(len(net.nodes)))
    for nid, gid in net.leads.items():
        if nid not in blocked:
            rep[idx[nid]] = idx[gid]
    keep = sorted(set(rep))
    col = {k: j for j, k in enumerate(keep)}
    n = len(net.nodes)
    P = sp.csc_matrix((np.ones(n), (np.arange(n), [col[r] for r in rep])), shape=(n, len(keep)))
    return P


def reduced_system(net, blocked=frozenset()):
    """(G_r, J_r, P): the nodal system with unblocked ideal leads eliminated by merging."""
    G, J = nodal_matrix(net, blocked)
    P = merge_map(net, blocked)
    return (P.T @ G @ P).tocsc(), P.T @ J, P


def to_dot(net):
    lines = ["graph dc {"]
    for n in net.nodes:
        shape = "box" if n.kind == "neutral-node" else "ellipse"
        label = n.id + (f"\\ng={n.grounding_g:.4g} S" if n.grounding_g else "")
        lines.append(f'  "{n.id}" [shape={shape}, label="{label}"];')
    for nid, gid in net.leads.items():
        lines.append(f'  "{nid}" -- "{gid}" [label="grounding lead", style=bold];')
    for e in net.edges:
        style = "" if e.in_service else ", style=dashed"
        lines.append(
            f'  "{e.from_node}" -- "{e.to_node}" '
            f'[label="{e.kind} {e.conductance:.4g} S {e.induced_v:.4g} V"{style}];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_csv(net):
    """Return (nodes_csv, edges_csv) text."""
    nbuf = io.StringIO()
    w = csv.writer(nbuf, lineterminator="\n")
    w.writerow(["id", "kind", "substation", "grounding_g_S", "candidate_cost", "transformer",
                "ground_lead_to"])
    for n in net.nodes:
        w.writerow([n.id, n.kind, n.substation, repr(n.grounding_g),
                    "" if n.blocker_cost is None else repr(n.blocker_cost),
                    n.transformer or "", n.ground or ""])
    ebuf = io.StringIO()
    w = csv.writer(ebuf, lineterminator="\n")
    w.writerow(["id", "from_node", "to_node", "kind", "conductance_S", "induced_V",
                "ac_link", "transformer", "in_service"])
    for e in net.edges:
        w.writerow([e.id, e.from_node, e.to_node, e.kind, repr(e.conductance),
                    repr(e.induced_v), e.ac_link or "", e.transformer or "", int(e.in_service)])
    return nbuf.getvalue(), ebuf.getvalue()


def with_induced(net, voltages):
    """Copy of ``net`` with ``induced_v`` replaced edge-wise from ``voltages``."""
    edges = tuple(replace(e, induced_v=float(v)) for e, v in zip(net.edges, voltages))
    return DcNetwork(net.nodes, edges, net.windings, net.line_ends)
