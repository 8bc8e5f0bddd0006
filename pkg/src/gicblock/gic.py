"""Quasi-dc solve for a fixed blocker configuration, effective GIC and q_loss."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .dcnet import grounding_vector, reduced_system
from .errors import FloatingNetworkError, WindingCurrentError

PIVOT_RTOL = 1e-12
SQRT_2_3 = math.sqrt(2.0 / 3.0)


@dataclass(frozen=True)
class BlockerConfig:
    placed: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "placed", frozenset(self.placed))

    def check(self, net):
        bad = sorted(p for p in self.placed if p not in net.node or not net.node[p].is_candidate)
        if bad:
            raise ValueError(f"blockers on non-candidate nodes: {bad}")


@dataclass
class GicSolution:
    node_ids: tuple
    node_v: np.ndarray  # V
    edge_ids: tuple
    edge_i: np.ndarray  # A, three-phase total, from_node -> to_node
    ground_i: np.ndarray  # A from each node straight to remote earth
    i_tilde: dict  # transformer -> signed effective GIC, A per phase
    i_eff: dict  # transformer -> |i_tilde|
    q_loss: dict = field(default_factory=dict)  # transformer -> pu at the evaluated voltage
    placed: frozenset = frozenset()
    lead_i: dict = field(default_factory=dict)  # neutral -> A through its lead to the ground node

    def v(self, node_id):
        return float(self.node_v[self.node_ids.index(node_id)])

    def current(self, edge_id):
        return float(self.edge_i[self.edge_ids.index(edge_id)])

    def neutral_ground_current(self, node_id):
        """Current from a neutral into its grounding path (direct or through its lead)."""
        if node_id in self.lead_i:
            return self.lead_i[node_id]
        return float(self.ground_i[self.node_ids.index(node_id)])

    def kcl_residual(self, net):
        """Max |sum(in) - sum(out) - current to ground| over nodes."""
        f, t, *_ = net.incidence()
        bal = np.zeros(len(self.node_ids))
        np.add.at(bal, t, self.edge_i)
        np.add.at(bal, f, -self.edge_i)
        bal -= self.ground_i
        idx = net.node_index
        for nid, cur in self.lead_i.items():
            bal[idx[nid]] -= cur
            bal[idx[net.leads[nid]]] += cur
        return float(np.max(np.abs(bal))) if len(bal) else 0.0


def _floating_components(net, G, P, active):
    """Reduced-node index arrays of components with no path to earth."""
    f, t, *_ = net.incidence()
    P = P.tocsr()
    rep = P.indices  # one nonzero per full node
    m = P.shape[1]
    adj = sp.coo_matrix((np.ones(active.sum()), (rep[f[active]], rep[t[active]])), shape=(m, m))
    ncomp, labels = connected_components(adj, directed=False)
    grounded = np.zeros(ncomp, dtype=bool)
    earth = P.T @ G
    for i in np.flatnonzero(earth > 0):
        grounded[labels[i]] = True
    return [np.flatnonzero(labels == c) for c in range(ncomp) if not grounded[c]]


def solve_gic(net, cfg=None, *, on_floating="raise", case=None, v_high=None):
    """Solve the grounded nodal equations for blocker configuration ``cfg``.

    A placed blocker removes its neutral's grounding (structural edit);
    unblocked ideal leads are eliminated by merging the neutral into its
    substation ground node. ``on_floating="raise"`` rejects any ungrounded
    component; ``"reference"`` pins one node of each such component to 0 V,
    which leaves every edge current unchanged. With ``case`` given, q_loss
    is evaluated at ``v_high`` (mapping bus id -> pu, default 1.0).
    """
    cfg = cfg or BlockerConfig()
    cfg.check(net)
    n = len(net.nodes)
    G, J, P = reduced_system(net, cfg.placed)
    gdiag = grounding_vector(net, cfg.placed)
    f, t, a, ev, on = net.incidence()
    floating = _floating_components(net, gdiag, P, on)
    if floating:
        if on_floating == "raise":
            full = P.tocsr().indices
            ids = [net.nodes[i].id for comp in floating for i in range(n) if full[i] in comp]
            raise FloatingNetworkError(
                f"floating dc network: no unblocked ground path for {len(floating)} component(s)", ids
            )
        G = G.tolil()
        for comp in floating:
            G[comp[0], comp[0]] += 1.0
        G = G.tocsc()
    if n:
        lu = spla.splu(G, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
        piv = np.abs(lu.U.diagonal())
        if piv.min() < PIVOT_RTOL * np.abs(G.diagonal()).max():
            raise FloatingNetworkError("singular nodal conductance matrix (pivot below threshold)")
        V = P @ lu.solve(J)
    else:
        V = np.zeros(0)

    I = np.where(on, a * (V[f] - V[t] + ev), 0.0) if len(f) else np.zeros(0)
    ground = gdiag * V
    lead = {}
    if net.leads:
        bal = np.zeros(n)
        np.add.at(bal, t, I)
        np.add.at(bal, f, -I)
        idx = net.node_index
        for nid in net.leads:
            lead[nid] = 0.0 if nid in cfg.placed else float(bal[idx[nid]])

    i_tilde, i_eff, q = {}, {}, {}
    xfmrs = case.transformer if case is not None else {}
    for tid, wmap in net.windings.items():
        per_phase = {w: I[k] / 3.0 for w, k in wmap.items()}
        xf = xfmrs.get(tid)
        if xf is None:
            continue
        it = effective_gic(xf, per_phase)
        i_tilde[tid] = it
        i_eff[tid] = ieff_magnitude(it)
        vh = 1.0 if v_high is None else v_high.get(xf.high_bus, 1.0)
        q[tid] = qloss(xf, i_eff[tid], vh, case.bus[xf.high_bus].base_kv, case.base_mva)
    return GicSolution(
        node_ids=tuple(nd.id for nd in net.nodes),
        node_v=V,
        edge_ids=tuple(e.id for e in net.edges),
        edge_i=I,
        ground_i=ground,
        i_tilde=i_tilde,
        i_eff=i_eff,
        q_loss=q,
        placed=cfg.placed,
        lead_i=lead,
    )


_REQUIRED = {
    "delta-delta": (),
    "gwye-delta": ("high",),
    "gwye-gwye": ("high", "low"),
    "auto": ("series", "common"),
    "other": (),
}


def effective_gic(xfmr, winding_currents):
    """Signed effective GIC (A per phase) from per-phase winding currents.

    Winding currents flow bus -> neutral (high, low, tertiary), high -> low
    (series) and low -> neutral (common).
    """
    cfg = xfmr.config
    if cfg == "three-winding":
        need = tuple(w for w in ("high", "low", "tertiary") if xfmr.grounded.get(w, True))
    else:
        need = _REQUIRED.get(cfg)
        if need is None:
            raise WindingCurrentError(f"transformer {xfmr.id}: unknown config {cfg!r}")
    missing = [w for w in need if w not in winding_currents]
    if missing:
        raise WindingCurrentError(f"transformer {xfmr.id}: missing winding current(s) {missing}")
    i = lambda w: float(winding_currents.get(w, 0.0))  # noqa: E731
    a = xfmr.alpha
    if cfg == "delta-delta":
        return i("high")
    if cfg in ("gwye-delta", "gwye-gwye"):
        return (a * i("high") + i("low")) / a
    if cfg == "auto":
        return (a * i("series") + i("common")) / (a + 1.0)
    if cfg == "three-winding":
        return i("high") + i("low") / a + i("tertiary") / xfmr.beta
    return 0.0


def ieff_magnitude(i_tilde):
    return abs(i_tilde)


def qloss(xfmr, i_eff, v_high, base_kv, base_mva=100.0):
    """GIC reactive loss in per-unit on ``base_mva``.

    With s_base in MVA, base_kv line-to-line kV and i_eff in A per phase, the
    product sqrt(2/3) * s_base / base_kv * K * i_eff * v is read as MVAr.
    """
    return qloss_coefficient(xfmr, base_kv, base_mva) * i_eff * v_high


def qloss_coefficient(xfmr, base_kv, base_mva=100.0):
    """d q_loss / d(i_eff * v_high), per-unit per ampere."""
    return SQRT_2_3 * xfmr.s_base / base_kv * xfmr.k_loss / base_mva


def qloss_by_bus(case, gic, v_high=None):
    """Aggregate transformer q_loss (pu) onto high-side busses."""
    out = {}
    for tid, ie in gic.i_eff.items():
        xf = case.transformer[tid]
        vh = 1.0 if v_high is None else v_high.get(xf.high_bus, 1.0)
        q = qloss(xf, ie, vh, case.bus[xf.high_bus].base_kv, case.base_mva)
        out[xf.high_bus] = out.get(xf.high_bus, 0.0) + q
    return out


def qloss_coeff_by_bus(case, gic):
    """Bus -> coefficient c with q_loss = c * v_bus (pu)."""
    out = {}
    for tid, ie in gic.i_eff.items():
        xf = case.transformer[tid]
        c = qloss_coefficient(xf, case.bus[xf.high_bus].base_kv, case.base_mva) * ie
        out[xf.high_bus] = out.get(xf.high_bus, 0.0) + c
    return out
